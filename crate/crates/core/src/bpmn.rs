//! BPMN 2.0 subset: `process`, `startEvent`, `endEvent`, `task`,
//! `sequenceFlow`, `parallelGateway` and `exclusiveGateway`.
//!
//! Documents written by [`to_xml`] parse back to the same graph, and
//! re-serializing that graph reproduces the input byte for byte.

use std::collections::BTreeMap;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::process::{Activity, GatewayKind, ProcessGraph};

const NS: &str = "http://www.omg.org/spec/BPMN/20100524/MODEL";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

pub fn to_xml(process_id: &str, g: &ProcessGraph) -> String {
    let mut x = String::new();
    x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    x.push_str(&format!(
        "<definitions xmlns=\"{NS}\" id=\"{}-definitions\" targetNamespace=\"urn:bilateral\">\n",
        esc(process_id)
    ));
    x.push_str(&format!("  <process id=\"{}\" isExecutable=\"false\">\n", esc(process_id)));
    x.push_str(&format!("    <startEvent id=\"{}\"/>\n", esc(&g.start)));
    for (id, a) in &g.activities {
        x.push_str(&format!("    <task id=\"{}\" name=\"{}\"/>\n", esc(id), esc(&a.service_class)));
    }
    for (id, kind) in &g.gateways {
        let (tag, dir) = match kind {
            GatewayKind::ParallelSplit => ("parallelGateway", "Diverging"),
            GatewayKind::ParallelJoin => ("parallelGateway", "Converging"),
            GatewayKind::ExclusiveSplit => ("exclusiveGateway", "Diverging"),
            GatewayKind::ExclusiveJoin => ("exclusiveGateway", "Converging"),
        };
        x.push_str(&format!("    <{tag} id=\"{}\" gatewayDirection=\"{dir}\"/>\n", esc(id)));
    }
    x.push_str(&format!("    <endEvent id=\"{}\"/>\n", esc(&g.end)));
    for (i, (a, b)) in g.edges.iter().enumerate() {
        x.push_str(&format!(
            "    <sequenceFlow id=\"f{}\" sourceRef=\"{}\" targetRef=\"{}\"/>\n",
            i + 1,
            esc(a),
            esc(b)
        ));
    }
    x.push_str("  </process>\n</definitions>\n");
    x
}

fn attrs(e: &BytesStart<'_>) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| Error::Xml(err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.local_name().as_ref()).into_owned();
        let value = a.unescape_value().map_err(|err| Error::Xml(err.to_string()))?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn required(map: &BTreeMap<String, String>, key: &str, tag: &str) -> Result<String> {
    map.get(key).cloned().ok_or_else(|| Error::Xml(format!("<{tag}> lacks `{key}`")))
}

/// Parses the first `process` element. Returns its id and graph.
pub fn from_xml(xml: &str) -> Result<(String, ProcessGraph)> {
    let mut reader = Reader::from_str(xml);
    let mut process_id = None;
    let mut start = None;
    let mut end = None;
    let mut activities = BTreeMap::new();
    let mut gateways = BTreeMap::new();
    let mut edges = Vec::new();
    loop {
        let ev = reader.read_event().map_err(|e| Error::Xml(e.to_string()))?;
        let e = match &ev {
            Event::Start(e) | Event::Empty(e) => e,
            Event::Eof => break,
            _ => continue,
        };
        let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
        let a = attrs(e)?;
        match name.as_str() {
            "process" => {
                if process_id.is_some() {
                    return Err(Error::Xml("more than one <process>".into()));
                }
                process_id = Some(required(&a, "id", &name)?);
            }
            "startEvent" => {
                if start.replace(required(&a, "id", &name)?).is_some() {
                    return Err(Error::Xml("more than one <startEvent>".into()));
                }
            }
            "endEvent" => {
                if end.replace(required(&a, "id", &name)?).is_some() {
                    return Err(Error::Xml("more than one <endEvent>".into()));
                }
            }
            "task" => {
                let id = required(&a, "id", &name)?;
                let class = a.get("name").cloned().unwrap_or_default();
                activities.insert(id, Activity { service_class: class });
            }
            "parallelGateway" | "exclusiveGateway" => {
                let id = required(&a, "id", &name)?;
                let diverging = match a.get("gatewayDirection").map(String::as_str) {
                    Some("Diverging") => true,
                    Some("Converging") => false,
                    other => {
                        return Err(Error::Xml(format!("gateway `{id}` has direction {other:?}")));
                    }
                };
                let kind = match (name.as_str(), diverging) {
                    ("parallelGateway", true) => GatewayKind::ParallelSplit,
                    ("parallelGateway", false) => GatewayKind::ParallelJoin,
                    (_, true) => GatewayKind::ExclusiveSplit,
                    (_, false) => GatewayKind::ExclusiveJoin,
                };
                gateways.insert(id, kind);
            }
            "sequenceFlow" => {
                edges.push((required(&a, "sourceRef", &name)?, required(&a, "targetRef", &name)?));
            }
            _ => {}
        }
    }
    let process_id = process_id.ok_or_else(|| Error::Xml("no <process> element".into()))?;
    let graph = ProcessGraph {
        activities,
        edges,
        gateways,
        start: start.ok_or_else(|| Error::Xml("no <startEvent>".into()))?,
        end: end.ok_or_else(|| Error::Xml("no <endEvent>".into()))?,
    };
    Ok((process_id, graph))
}
