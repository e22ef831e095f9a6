//! Session documents and the elicitation state machine.

use bilateral_core::construction::Solution;
use bilateral_core::kgr::Revision;
use bilateral_core::model::ITree;
use bilateral_core::persistence::{Document, RepoKind};
use bilateral_core::selection::SelectionResult;
use bilateral_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionState {
    Drafting,
    Revising,
    Selected,
    Constructed,
}

impl SessionState {
    /// Whether `self -> to` is an edge of the state machine.
    pub fn can_move_to(self, to: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, to),
            (Drafting, Revising) | (Revising, Drafting) | (Revising, Selected) | (Selected, Constructed)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RevisionStatus {
    Pending,
    Accepted,
    Rejected,
    /// Another revision of the same batch was accepted first.
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PendingRevision {
    pub index: usize,
    pub status: RevisionStatus,
    pub revision: Revision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    pub from: SessionState,
    pub to: SessionState,
    pub action: String,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Session {
    pub id: String,
    pub state: SessionState,
    pub tree: ITree,
    pub pending_revisions: Vec<PendingRevision>,
    pub selection: Option<SelectionResult>,
    pub solution: Option<Solution>,
    /// Present whenever a solution is; `true` when it violates a constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible: Option<bool>,
    pub created_at: u64,
    pub updated_at: u64,
    pub history: Vec<Transition>,
}

impl Session {
    pub fn new(id: String, tree: ITree, now: u64) -> Session {
        Session {
            id,
            state: SessionState::Drafting,
            tree,
            pending_revisions: Vec::new(),
            selection: None,
            solution: None,
            infeasible: None,
            created_at: now,
            updated_at: now,
            history: Vec::new(),
        }
    }

    fn require(&self, action: &'static str, allowed: &[SessionState]) -> Result<(), ApiError> {
        if allowed.contains(&self.state) {
            Ok(())
        } else {
            Err(ApiError::IllegalTransition { action, state: self.state })
        }
    }

    fn move_to(&mut self, to: SessionState, action: &str, now: u64) {
        debug_assert!(self.state.can_move_to(to));
        self.history.push(Transition { from: self.state, to, action: action.into(), at: now });
        self.state = to;
    }

    pub fn check_tree_editable(&self) -> Result<(), ApiError> {
        self.require("edit the tree", &[SessionState::Drafting])
    }

    pub fn check_recommendable(&self) -> Result<(), ApiError> {
        self.require("request recommendations", &[SessionState::Drafting, SessionState::Revising])
    }

    /// Replaces the tree; the caller has validated it.
    pub fn set_tree(&mut self, tree: ITree, now: u64) -> Result<(), ApiError> {
        self.check_tree_editable()?;
        self.tree = tree;
        self.updated_at = now;
        Ok(())
    }

    pub fn check_can_revise(&self) -> Result<(), ApiError> {
        self.require("propose revisions", &[SessionState::Drafting])
    }

    pub fn start_revising(&mut self, revisions: Vec<Revision>, now: u64) -> Result<(), ApiError> {
        self.check_can_revise()?;
        self.pending_revisions = revisions
            .into_iter()
            .enumerate()
            .map(|(index, revision)| PendingRevision { index, status: RevisionStatus::Pending, revision })
            .collect();
        self.move_to(SessionState::Revising, "revise", now);
        self.updated_at = now;
        Ok(())
    }

    fn pending(&self, action: &'static str, n: usize) -> Result<usize, ApiError> {
        self.require(action, &[SessionState::Revising])?;
        let i = self.pending_revisions.iter().position(|p| p.index == n).ok_or(ApiError::UnknownRevision(n))?;
        let status = self.pending_revisions[i].status;
        if status != RevisionStatus::Pending {
            return Err(ApiError::RevisionNotPending { index: n, status });
        }
        Ok(i)
    }

    /// Applies revision `n` and returns to drafting; the rest of the batch
    /// no longer applies to the new tree.
    pub fn accept(&mut self, n: usize, now: u64) -> Result<(), ApiError> {
        let i = self.pending(
            "accept a revision",
            n,
        )?;
        for p in &mut self.pending_revisions {
            if p.status == RevisionStatus::Pending {
                p.status = RevisionStatus::Superseded;
            }
        }
        self.pending_revisions[i].status = RevisionStatus::Accepted;
        self.tree = self.pending_revisions[i].revision.tree.clone();
        self.move_to(SessionState::Drafting, "accept", now);
        self.updated_at = now;
        Ok(())
    }

    /// Rejects revision `n`; once nothing is pending the session drafts again.
    pub fn reject(&mut self, n: usize, now: u64) -> Result<(), ApiError> {
        let i = self.pending("reject a revision", n)?;
        self.pending_revisions[i].status = RevisionStatus::Rejected;
        if self.pending_revisions.iter().all(|p| p.status != RevisionStatus::Pending) {
            self.move_to(SessionState::Drafting, "reject", now);
        }
        self.updated_at = now;
        Ok(())
    }

    pub fn check_can_select(&self) -> Result<(), ApiError> {
        self.require("select patterns", &[SessionState::Revising])
    }

    pub fn set_selection(&mut self, selection: SelectionResult, now: u64) -> Result<(), ApiError> {
        self.check_can_select()?;
        self.selection = Some(selection);
        self.move_to(SessionState::Selected, "select", now);
        self.updated_at = now;
        Ok(())
    }

    pub fn check_can_construct(&self) -> Result<&SelectionResult, ApiError> {
        self.require("construct", &[SessionState::Selected])?;
        self.selection.as_ref().ok_or(ApiError::IllegalTransition { action: "construct", state: self.state })
    }

    pub fn set_solution(&mut self, solution: Solution, now: u64) -> Result<(), ApiError> {
        self.check_can_construct()?;
        self.infeasible = Some(!solution.feasible);
        self.solution = Some(solution);
        self.move_to(SessionState::Constructed, "construct", now);
        self.updated_at = now;
        Ok(())
    }
}

impl Document for Session {
    const KIND: RepoKind = RepoKind::Session;

    fn id(&self) -> String {
        self.id.clone()
    }

    fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        let bad = |m: &str| Err(Error::InvalidDocument(format!("session `{}`: {m}", self.id)));
        let selected = matches!(self.state, SessionState::Selected | SessionState::Constructed);
        if self.selection.is_some() != selected {
            return bad("selection must be present exactly in Selected and Constructed");
        }
        if self.solution.is_some() != (self.state == SessionState::Constructed) {
            return bad("solution must be present exactly in Constructed");
        }
        if self.infeasible != self.solution.as_ref().map(|s| !s.feasible) {
            return bad("infeasible flag disagrees with the solution");
        }
        let mut state = SessionState::Drafting;
        for t in &self.history {
            if t.from != state || !state.can_move_to(t.to) {
                return bad("history contains an illegal transition");
            }
            state = t.to;
        }
        if state != self.state {
            return bad("history does not end in the current state");
        }
        Ok(())
    }
}
