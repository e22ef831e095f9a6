use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bilateral_core::fixtures::wedding_scenario;
use bilateral_core::model::RequirementPattern;
use bilateral_core::persistence::{Repository, PMM_ID};
use bilateral_core::pmm::MatchingMatrix;
use bilateral_core::requirement_mining::{derive_rps, MiningConfig};
use serde_json::Value;

fn bilateral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilateral")).args(args).env_remove("BILATERAL_REPO_ROOT").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every non-hidden file under `dir` with its contents.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.file_name().unwrap().to_str().unwrap().starts_with('.') {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn fixtures(seed: u64) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = bilateral(&["gen-fixtures", "--seed", &seed.to_string(), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn construct(fx: &Path, strategy: &str, seed: &str) -> Output {
    bilateral(&[
        "construct",
        "--tree",
        s(&fx.join("wedding-tree.json")),
        "--rp-repo",
        s(&fx.join("rps")),
        "--sp-repo",
        s(&fx.join("sps")),
        "--pmm",
        s(&fx.join("pmm/matrix.json")),
        "--context",
        &fs::read_to_string(fx.join("context.json")).unwrap(),
        "--strategy",
        strategy,
        "--seed",
        seed,
    ])
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bilateral(&["demo", "--bogus"]).status.code(), Some(2));
    assert_eq!(bilateral(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bilateral(&["construct"]).status.code(), Some(2));
    assert_eq!(bilateral(&["demo", "--strategy", "fastest"]).status.code(), Some(2));
    let bad = bilateral(&[
        "construct", "--tree", "t", "--rp-repo", "r", "--sp-repo", "s", "--pmm", "p", "--context", "not-a-context",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one_with_a_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bilateral(&["select-rp", "--tree", s(&dir.path().join("missing.json")), "--rp-repo", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]"));

    fs::write(dir.path().join("tree.json"), r#"{"root": "a", "nodes": {}}"#).unwrap();
    let out = bilateral(&["select-rp", "--tree", s(&dir.path().join("tree.json")), "--rp-repo", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[invalid_tree]"));

    let empty = tempfile::tempdir().unwrap();
    let out = bilateral(&["mine-rp", "--corpus", s(empty.path()), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[empty_corpus]"));
}

#[test]
fn fixtures_are_reproducible() {
    let (a, b, c) = (fixtures(5), fixtures(5), fixtures(6));
    let (sa, sb, sc) = (snapshot(a.path()), snapshot(b.path()), snapshot(c.path()));
    assert_eq!(sa, sb);
    assert_ne!(sa, sc);
    assert!(sa.keys().any(|p| p.starts_with("requirements")));
    assert!(sa.keys().any(|p| p.starts_with("travel/logs")));
}

#[test]
fn meta_construction_is_byte_identical() {
    let fx = fixtures(2);
    let a = construct(fx.path(), "meta", "7");
    let b = construct(fx.path(), "meta", "7");
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["solution"]["strategy"], "meta");
    let (_, g) = bilateral_core::bpmn::from_xml(v["bpmn"].as_str().unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&g).unwrap(), v["solution"]["composedProcess"]);
    assert_eq!(v.get("infeasible").is_some(), v["solution"]["feasible"] == false);
}

#[test]
fn read_only_commands_leave_repositories_alone() {
    let fx = fixtures(4);
    let before = snapshot(fx.path());
    for strategy in ["exact", "rule", "heuristic", "meta"] {
        assert!(construct(fx.path(), strategy, "1").status.success(), "{strategy}");
    }
    let out = bilateral(&["select-rp", "--tree", s(&fx.path().join("wedding-tree.json")), "--rp-repo", s(fx.path()), "--exact"]);
    assert!(out.status.success());
    let kgr = tempfile::tempdir().unwrap();
    assert!(bilateral(&["build-kgr", "--corpus", s(fx.path()), "--out", s(&kgr.path().join("k.json"))]).status.success());
    assert_eq!(snapshot(fx.path()), before);
}

#[test]
fn mine_rp_matches_the_library() {
    let fx = fixtures(1);
    let out = tempfile::tempdir().unwrap();
    let res = bilateral(&["mine-rp", "--corpus", s(fx.path()), "--min-support", "2", "--out", s(out.path())]);
    assert!(res.status.success());
    let mined: Vec<RequirementPattern> = Repository::open(out.path()).unwrap().list().unwrap();
    let mut want = derive_rps(&wedding_scenario(1).unwrap().corpus, &MiningConfig::default()).unwrap();
    want.sort_by(|a, b| a.id.cmp(&b.id));
    assert_eq!(mined, want);
}

#[test]
fn mine_sp_and_recompute_write_valid_documents() {
    let fx = fixtures(3);
    let out = tempfile::tempdir().unwrap();
    let travel = fx.path().join("travel");
    let res = bilateral(&["mine-sp", "--log", s(&travel), "--services", s(&travel), "--out", s(out.path())]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["k"], 2, "four services give k = ceil(sqrt(2))");
    assert!(!v["written"].as_array().unwrap().is_empty());

    let m2 = out.path().join("m2.json");
    let res = bilateral(&[
        "pmm", "recompute", "--in", s(&out.path().join("pmm")), "--out", s(&m2), "--as-of", "42",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let m: MatchingMatrix = serde_json::from_slice(&fs::read(&m2).unwrap()).unwrap();
    m.validate().unwrap();
    assert_eq!(m.last_recompute, 42);
    assert_eq!(m.version, 2);

    let res = bilateral(&["pmm", "recompute", "--in", s(&m2), "--out", s(out.path())]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stored: MatchingMatrix = Repository::open(out.path()).unwrap().get(PMM_ID).unwrap();
    assert_eq!((stored.version, stored.last_recompute), (3, 42));
}

#[test]
fn demo_table_names_both_patterns() {
    let out = bilateral(&["demo", "--format", "table"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("banquet, venue layout, food"));
    assert!(text.contains("pick-up, inviting"));
    assert!(text.contains("feasible: true"));
}
