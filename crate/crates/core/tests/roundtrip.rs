mod support;

use bilateral_core::bpmn::{from_xml, to_xml};
use bilateral_core::persistence::{Document, RequirementDoc, Store};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use support::*;

fn json_identity<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) {
    let s = serde_json::to_string(v).unwrap();
    let back: T = serde_json::from_str(&s).unwrap();
    assert_eq!(&back, v);
}

fn doc_identity<T: Document + Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) {
    let files: Vec<Vec<u8>> = v.encode().unwrap().into_iter().map(|(_, b)| b).collect();
    let back = T::decode(&files).unwrap();
    assert_eq!(&back, v);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_parse_is_identity(seed in any::<u64>()) {
        let e = random_entities(seed);
        json_identity(&e.tree);
        doc_identity(&RequirementDoc { id: "req".into(), tree: e.tree.clone() });
        for rp in &e.rps { json_identity(rp); doc_identity(rp); }
        for s in &e.services { json_identity(s); doc_identity(s); }
        for sp in &e.sps { json_identity(sp); doc_identity(sp); }
        for iss in &e.log { json_identity(iss); doc_identity(iss); }
        json_identity(&e.matrix);
        doc_identity(&e.matrix);
        json_identity(&e.solution);
        json_identity(&e.model);
    }

    #[test]
    fn bpmn_round_trips_bit_exact(seed in any::<u64>()) {
        let e = random_entities(seed);
        for (i, g) in e.processes.iter().chain(e.sps.iter().map(|s| &s.process)).enumerate() {
            let id = format!("p-{i}&<{}>", ODD_LABELS[i % ODD_LABELS.len()]);
            let xml = to_xml(&id, g);
            let (back_id, back) = from_xml(&xml).unwrap();
            prop_assert_eq!(&back_id, &id);
            prop_assert_eq!(&back, g);
            prop_assert_eq!(to_xml(&back_id, &back), xml);
        }
        let composed = &e.solution.composed_process;
        prop_assert_eq!(&from_xml(&to_xml("iss", composed)).unwrap().1, composed);
    }
}

#[test]
fn store_round_trip_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::create(dir.path()).unwrap();
    let e = random_entities(11);
    for s in &e.services {
        store.services.put(s).unwrap();
    }
    for sp in &e.sps {
        store.sps.put(sp).unwrap();
    }
    for rp in &e.rps {
        store.rps.put(rp).unwrap();
    }
    let reopened = Store::open(dir.path()).unwrap();
    assert_eq!(reopened.services.list().unwrap(), {
        let mut v = e.services.clone();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    });
    for sp in &e.sps {
        assert_eq!(&reopened.sps.get(&sp.id).unwrap(), sp);
    }
    assert_eq!(reopened.sps.index(), store.sps.index());
    assert_eq!(reopened.rps.len(), e.rps.len());
}

#[test]
fn readers_see_whole_versions_during_writes() {
    use bilateral_core::persistence::Repository;
    use bilateral_core::model::ServicePattern;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;

    let dir = tempfile::tempdir().unwrap();
    let repo: Arc<Repository<ServicePattern>> = Arc::new(Repository::create(dir.path()).unwrap());
    let e = random_entities(5);
    let mut versions: Vec<ServicePattern> = Vec::new();
    for (i, p) in e.processes.iter().enumerate() {
        let mut sp = e.sps[0].clone();
        sp.info.description = format!("version {i}");
        sp.process = p.clone();
        sp.granularity = p.activities.len();
        // Keep the instance set consistent with the new process.
        sp.instances.truncate(1);
        let acts: Vec<String> = p.activities.keys().cloned().collect();
        sp.instances[0].binding = acts.iter().map(|a| (a.clone(), "svc".to_string())).collect();
        if sp.validate(None).is_ok() {
            versions.push(sp);
        }
    }
    assert!(versions.len() >= 2, "need two valid versions");
    repo.put(&versions[0]).unwrap();
    let id = versions[0].id.clone();
    let stop = Arc::new(AtomicBool::new(false));
    let writer = {
        let (repo, versions, stop) = (repo.clone(), versions.clone(), stop.clone());
        std::thread::spawn(move || {
            for i in 0..200 {
                repo.put(&versions[i % versions.len()]).unwrap();
            }
            stop.store(true, Ordering::SeqCst);
        })
    };
    let readers: Vec<_> = (0..3)
        .map(|_| {
            let (repo, versions, stop, id) = (repo.clone(), versions.clone(), stop.clone(), id.clone());
            std::thread::spawn(move || {
                let mut reads = 0;
                while !stop.load(Ordering::SeqCst) || reads < 10 {
                    let got = repo.get(&id).unwrap();
                    assert!(versions.contains(&got), "torn read");
                    reads += 1;
                }
            })
        })
        .collect();
    writer.join().unwrap();
    for r in readers {
        r.join().unwrap();
    }
}
