//! Probabilistic matching matrix over (RP, SP, context).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, PoisonError, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Context, ServicePattern};
use crate::sp_mining::{HistoricalIss, MinedSp};

pub const DEFAULT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchOutcome {
    pub rp_id: String,
    pub sp_id: String,
    pub context: Context,
    pub success: bool,
    pub quality_score: f64,
    pub difficulty: f64,
    pub timestamp: u64,
}

impl MatchOutcome {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Range(format!("{name} {v} outside [0,1]")))
            }
        };
        unit("qualityScore", self.quality_score)?;
        unit("difficulty", self.difficulty)?;
        if self.rp_id.is_empty() || self.sp_id.is_empty() {
            return Err(Error::Range("outcome needs rpId and spId".into()));
        }
        Ok(())
    }

    /// Quality credited to the cell; failed matches count as zero quality.
    pub fn credited_quality(&self) -> f64 {
        if self.success {
            self.quality_score
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Cell {
    pub rp_id: String,
    pub sp_id: String,
    pub context_key: String,
    pub uses: u64,
    pub quality_sum: f64,
    pub difficulty_sum: f64,
    pub prob: f64,
}

impl Cell {
    /// `sqrt(uses) * meanQuality * (1 + meanDifficulty)`, zero when unused.
    pub fn score(&self) -> f64 {
        score(self.uses, self.quality_sum, self.difficulty_sum)
    }
}

pub fn score(uses: u64, quality_sum: f64, difficulty_sum: f64) -> f64 {
    if uses == 0 {
        return 0.0;
    }
    let n = uses as f64;
    n.sqrt() * (quality_sum / n) * (1.0 + difficulty_sum / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SliceEntry {
    pub sp_id: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Lookup {
    pub entries: Vec<SliceEntry>,
    /// The exact context slice was empty; entries come from all contexts.
    pub fallback: bool,
}

/// Cells are kept sorted by `(rpId, contextKey, spId)` so each slice is a
/// contiguous run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchingMatrix {
    pub version: u64,
    pub last_recompute: u64,
    pub smoothing: f64,
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub verifying_degree: BTreeMap<String, f64>,
}

impl Default for MatchingMatrix {
    fn default() -> Self {
        MatchingMatrix {
            version: 0,
            last_recompute: 0,
            smoothing: DEFAULT_SMOOTHING,
            cells: Vec::new(),
            verifying_degree: BTreeMap::new(),
        }
    }
}

impl MatchingMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    fn position(&self, rp: &str, ctx: &str, sp: &str) -> std::result::Result<usize, usize> {
        self.cells
            .binary_search_by(|c| (c.rp_id.as_str(), c.context_key.as_str(), c.sp_id.as_str()).cmp(&(rp, ctx, sp)))
    }

    fn cell_mut(&mut self, rp: &str, ctx: &str, sp: &str) -> &mut Cell {
        let i = match self.position(rp, ctx, sp) {
            Ok(i) => i,
            Err(i) => {
                self.cells.insert(
                    i,
                    Cell {
                        rp_id: rp.into(),
                        sp_id: sp.into(),
                        context_key: ctx.into(),
                        uses: 0,
                        quality_sum: 0.0,
                        difficulty_sum: 0.0,
                        prob: 0.0,
                    },
                );
                i
            }
        };
        &mut self.cells[i]
    }

    pub fn cell(&self, rp: &str, sp: &str, ctx: &Context) -> Option<&Cell> {
        self.position(rp, &ctx.key(), sp).ok().map(|i| &self.cells[i])
    }

    /// Adds an unused cell so the SP becomes a candidate for the RP.
    pub fn register(&mut self, rp: &str, sp: &str, ctx: &Context) {
        self.cell_mut(rp, &ctx.key(), sp);
    }

    /// Accumulates the outcome; probabilities wait for [`Self::recompute`].
    pub fn record_outcome(&mut self, o: &MatchOutcome) -> Result<()> {
        o.validate()?;
        let c = self.cell_mut(&o.rp_id, &o.context.key(), &o.sp_id);
        c.uses += 1;
        c.quality_sum += o.credited_quality();
        c.difficulty_sum += o.difficulty;
        Ok(())
    }

    fn slices(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.cells.len() {
            let boundary = i == self.cells.len()
                || self.cells[i].rp_id != self.cells[start].rp_id
                || self.cells[i].context_key != self.cells[start].context_key;
            if boundary {
                if start < i {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    /// Re-derives every probability from the accumulated statistics, bumps
    /// the version and refreshes per-SP verifying degrees. `as_of` becomes
    /// the recompute stamp.
    pub fn recompute(&mut self, smoothing: f64, as_of: u64) -> Result<()> {
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(Error::Range(format!("smoothing must be > 0, got {smoothing}")));
        }
        for r in self.slices() {
            let weights: Vec<f64> = self.cells[r.clone()].iter().map(|c| c.score() + smoothing).collect();
            let total: f64 = weights.iter().sum();
            for (c, w) in self.cells[r].iter_mut().zip(weights) {
                c.prob = w / total;
            }
        }
        let mut vd: BTreeMap<String, f64> = BTreeMap::new();
        for c in &self.cells {
            let e = vd.entry(c.sp_id.clone()).or_insert(0.0);
            *e = e.max(c.prob);
        }
        self.verifying_degree = vd;
        self.smoothing = smoothing;
        self.version += 1;
        self.last_recompute = self.last_recompute.max(as_of);
        Ok(())
    }

    /// Ranked SPs for the RP in this context, falling back to the RP's
    /// statistics pooled over all contexts when the exact slice is empty.
    pub fn lookup(&self, rp: &str, ctx: &Context, top_k: usize) -> Lookup {
        let key = ctx.key();
        let exact: Vec<SliceEntry> = self
            .cells
            .iter()
            .filter(|c| c.rp_id == rp && c.context_key == key)
            .map(|c| SliceEntry { sp_id: c.sp_id.clone(), prob: c.prob })
            .collect();
        let fallback = exact.is_empty();
        let mut entries = if fallback { self.marginal(rp) } else { exact };
        let fallback = fallback && !entries.is_empty();
        entries.sort_by(|a, b| b.prob.total_cmp(&a.prob).then_with(|| a.sp_id.cmp(&b.sp_id)));
        entries.truncate(top_k);
        Lookup { entries, fallback }
    }

    /// Slice of `rp` pooled over contexts, normalized with the matrix's
    /// smoothing.
    pub fn marginal(&self, rp: &str) -> Vec<SliceEntry> {
        let mut pooled: BTreeMap<&str, (u64, f64, f64)> = BTreeMap::new();
        for c in self.cells.iter().filter(|c| c.rp_id == rp) {
            let e = pooled.entry(&c.sp_id).or_default();
            e.0 += c.uses;
            e.1 += c.quality_sum;
            e.2 += c.difficulty_sum;
        }
        let weights: Vec<(&str, f64)> =
            pooled.into_iter().map(|(sp, (u, q, d))| (sp, score(u, q, d) + self.smoothing)).collect();
        let total: f64 = weights.iter().map(|w| w.1).sum();
        weights.into_iter().map(|(sp, w)| SliceEntry { sp_id: sp.to_string(), prob: w / total }).collect()
    }

    /// Builds a matrix from scratch: registrations, then outcomes, then one
    /// recompute stamped with the latest outcome time.
    pub fn from_outcomes(
        registrations: &[(String, String, Context)],
        outcomes: &[MatchOutcome],
        smoothing: f64,
    ) -> Result<Self> {
        let mut m = MatchingMatrix::new();
        for (rp, sp, ctx) in registrations {
            m.register(rp, sp, ctx);
        }
        for o in outcomes {
            m.record_outcome(o)?;
        }
        let as_of = outcomes.iter().map(|o| o.timestamp).max().unwrap_or(0);
        m.recompute(smoothing, as_of)?;
        Ok(m)
    }

    pub fn rp_ids(&self) -> BTreeSet<&str> {
        self.cells.iter().map(|c| c.rp_id.as_str()).collect()
    }

    /// Copies verifying degrees into the given patterns.
    pub fn apply_verifying_degree(&self, sps: &mut [ServicePattern]) {
        for sp in sps {
            sp.verifying_degree = self.verifying_degree.get(&sp.id).copied().unwrap_or(0.0).clamp(0.0, 1.0);
        }
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.cells.windows(2) {
            let k = |c: &Cell| (c.rp_id.clone(), c.context_key.clone(), c.sp_id.clone());
            if k(&w[0]) >= k(&w[1]) {
                return Err(Error::InvalidDocument("matrix cells are not strictly sorted".into()));
            }
        }
        for c in &self.cells {
            if !(c.prob >= 0.0 && c.prob <= 1.0) || c.quality_sum < 0.0 || c.difficulty_sum < 0.0 {
                return Err(Error::InvalidDocument(format!("cell ({}, {}) out of range", c.rp_id, c.sp_id)));
            }
        }
        if self.smoothing.is_nan() || self.smoothing <= 0.0 {
            return Err(Error::InvalidDocument("smoothing must be > 0".into()));
        }
        Ok(())
    }
}

/// Single-writer, multi-reader holder: readers take an immutable snapshot,
/// writers publish a new one atomically.
#[derive(Debug, Default)]
pub struct SharedMatrix {
    inner: RwLock<Arc<MatchingMatrix>>,
    write: std::sync::Mutex<()>,
}

impl SharedMatrix {
    pub fn new(m: MatchingMatrix) -> Self {
        SharedMatrix { inner: RwLock::new(Arc::new(m)), write: std::sync::Mutex::new(()) }
    }

    pub fn snapshot(&self) -> Arc<MatchingMatrix> {
        self.inner.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    /// Applies `f` to a private copy and publishes it if `f` succeeds.
    pub fn update<T>(&self, f: impl FnOnce(&mut MatchingMatrix) -> Result<T>) -> Result<T> {
        let _guard = self.write.lock().unwrap_or_else(PoisonError::into_inner);
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next)?;
        *self.inner.write().unwrap_or_else(PoisonError::into_inner) = Arc::new(next);
        Ok(out)
    }
}

/// Seed outcomes from the log: every RP a solution served is paired with
/// the maximal mined patterns found in that solution (those whose activity
/// set is not strictly inside another pattern's occurrence there).
pub fn outcomes_from_log(log: &[HistoricalIss], mined: &[MinedSp]) -> Vec<MatchOutcome> {
    let mut out = Vec::new();
    for (t, iss) in log.iter().enumerate() {
        let occ: Vec<(&str, &BTreeSet<String>)> = mined
            .iter()
            .flat_map(|m| {
                m.occurrences.iter().filter(|(id, _)| *id == iss.id).map(move |(_, acts)| (m.sp.id.as_str(), acts))
            })
            .collect();
        let maximal: BTreeSet<&str> = occ
            .iter()
            .filter(|(_, a)| !occ.iter().any(|(_, b)| a.len() < b.len() && a.is_subset(b)))
            .map(|(sp, _)| *sp)
            .collect();
        let quality = (iss.outcome_qos.rating / 5.0).clamp(0.0, 1.0);
        for rp in &iss.rp_ids {
            for sp in &maximal {
                out.push(MatchOutcome {
                    rp_id: rp.clone(),
                    sp_id: sp.to_string(),
                    context: iss.context.clone(),
                    success: true,
                    quality_score: quality,
                    difficulty: 0.0,
                    timestamp: t as u64,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Metric;

    fn ctx() -> Context {
        Context::new("couple", "city", Metric::Cost)
    }

    fn outcome(sp: &str, q: f64) -> MatchOutcome {
        MatchOutcome {
            rp_id: "rp1".into(),
            sp_id: sp.into(),
            context: ctx(),
            success: true,
            quality_score: q,
            difficulty: 0.0,
            timestamp: 1,
        }
    }

    #[test]
    fn lookup_examples() {
        let mut m = MatchingMatrix::new();
        m.record_outcome(&outcome("SP1", 0.7)).unwrap();
        m.record_outcome(&outcome("SP2", 0.3)).unwrap();
        m.recompute(1e-12, 1).unwrap();
        let l = m.lookup("rp1", &ctx(), 1);
        assert_eq!(l.entries.len(), 1);
        assert_eq!(l.entries[0].sp_id, "SP1");
        assert!((l.entries[0].prob - 0.7).abs() < 1e-9);
        assert!(!l.fallback);
        assert!(m.lookup("nope", &ctx(), 3).entries.is_empty());

        let other = Context::new("family", "rural", Metric::Time);
        let f = m.lookup("rp1", &other, 5);
        assert!(f.fallback);
        assert_eq!(f.entries.len(), 2);
    }

    #[test]
    fn record_accumulates() {
        let mut m = MatchingMatrix::new();
        m.record_outcome(&outcome("SP1", 0.5)).unwrap();
        assert_eq!(m.cell("rp1", "SP1", &ctx()).unwrap().uses, 1);
        m.record_outcome(&outcome("SP1", 0.25)).unwrap();
        let c = m.cell("rp1", "SP1", &ctx()).unwrap();
        assert_eq!((c.uses, c.quality_sum, c.prob), (2, 0.75, 0.0));
        assert_eq!(m.version, 0);
        assert!(matches!(m.record_outcome(&outcome("SP1", 1.2)), Err(Error::Range(_))));
    }

    #[test]
    fn recompute_examples() {
        let mut m = MatchingMatrix::new();
        m.record_outcome(&outcome("A", 0.5)).unwrap();
        m.record_outcome(&outcome("B", 0.5)).unwrap();
        m.recompute(0.1, 1).unwrap();
        assert_eq!(m.cell("rp1", "A", &ctx()).unwrap().prob, 0.5);
        assert_eq!(m.version, 1);

        let mut one = MatchingMatrix::new();
        one.record_outcome(&outcome("A", 0.3)).unwrap();
        one.recompute(1.0, 1).unwrap();
        assert_eq!(one.cell("rp1", "A", &ctx()).unwrap().prob, 1.0);
        assert_eq!(one.verifying_degree["A"], 1.0);

        // Scores 3 and 1: nine uses of quality 1 versus one.
        let mut m = MatchingMatrix::new();
        for _ in 0..9 {
            m.record_outcome(&outcome("A", 1.0)).unwrap();
        }
        m.record_outcome(&outcome("B", 1.0)).unwrap();
        m.recompute(1e-12, 1).unwrap();
        assert!((m.cell("rp1", "A", &ctx()).unwrap().prob - 0.75).abs() < 1e-9);
        assert!(matches!(m.recompute(0.0, 1), Err(Error::Range(_))));
    }

    #[test]
    fn shared_snapshots() {
        let shared = SharedMatrix::new(MatchingMatrix::new());
        let before = shared.snapshot();
        shared.update(|m| m.record_outcome(&outcome("A", 1.0))).unwrap();
        assert!(before.cells.is_empty());
        assert_eq!(shared.snapshot().cells.len(), 1);
        assert!(shared.update(|m| m.record_outcome(&outcome("A", 2.0))).is_err());
        assert_eq!(shared.snapshot().cells[0].uses, 1);
    }
}
