//! Line-delimited and JSON file formats for sequences, graphs and ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GlobalGraph, LabelParents, LocalGraph, Parent};
use crate::scalar::Scalar;
use crate::types::{EventId, EventVocab, LabelId, LabelVocab, LabeledSequence};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRecord {
    id: String,
    events: Vec<(u32, f64)>,
    labels: Vec<u32>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_sequences_to<W: Write>(mut out: W, sequences: &[LabeledSequence]) -> std::io::Result<()> {
    for s in sequences {
        let rec = SequenceRecord {
            id: s.id.clone(),
            events: s.events.iter().map(|&(e, t)| (e.0, t)).collect(),
            labels: s.positive_labels().into_iter().map(|l| l.0).collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_sequences(path: impl AsRef<Path>, sequences: &[LabeledSequence]) -> Result<()> {
    let path = path.as_ref();
    write_sequences_to(create(path)?, sequences).map_err(|e| Error::io(path, e))
}

/// Parses sequences, validating ids against the vocabulary sizes.
pub fn parse_sequences<R: BufRead>(
    input: R,
    origin: &Path,
    n_events: usize,
    n_labels: usize,
) -> Result<Vec<LabeledSequence>> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: k + 1,
            message,
        };
        let rec: SequenceRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let mut labels = vec![false; n_labels];
        for l in rec.labels {
            let slot = labels
                .get_mut(l as usize)
                .ok_or_else(|| bad(format!("label id {l} outside label vector of length {n_labels}")))?;
            *slot = true;
        }
        let events = rec.events.into_iter().map(|(e, t)| (EventId(e), t)).collect();
        let seq = LabeledSequence::new(rec.id, events, labels).map_err(|e| bad(e.to_string()))?;
        seq.validate(n_events, n_labels).map_err(|e| bad(e.to_string()))?;
        out.push(seq);
    }
    Ok(out)
}

pub fn read_sequences(
    path: impl AsRef<Path>,
    n_events: usize,
    n_labels: usize,
) -> Result<Vec<LabeledSequence>> {
    let path = path.as_ref();
    parse_sequences(open(path)?, path, n_events, n_labels)
}

pub fn write_local_graphs<T: Scalar>(path: impl AsRef<Path>, graphs: &[LocalGraph<T>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for g in graphs {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_local_graphs<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<LocalGraph<T>>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (k, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?;
        out.push(g);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct ParentRecord<T> {
    event: String,
    frequency: T,
    support: u64,
    mi: T,
}

/// `graph.json`: label name → list of parent records.
pub fn graph_to_json<T: Scalar>(
    graph: &GlobalGraph<T>,
    events: &EventVocab,
    labels: &LabelVocab,
) -> Result<String> {
    let map: BTreeMap<&str, Vec<ParentRecord<T>>> = graph
        .labels
        .iter()
        .map(|l| {
            let parents = l
                .parents
                .iter()
                .map(|p| ParentRecord {
                    event: events.name(p.event).to_string(),
                    frequency: p.frequency,
                    support: p.support,
                    mi: p.mi,
                })
                .collect();
            (labels.name(l.label), parents)
        })
        .collect();
    Ok(serde_json::to_string_pretty(&map)? + "\n")
}

pub fn graph_from_json<T: Scalar>(
    text: &str,
    events: &EventVocab,
    labels: &LabelVocab,
) -> Result<GlobalGraph<T>> {
    let map: BTreeMap<String, Vec<ParentRecord<T>>> = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(map.len());
    for (name, records) in map {
        let label = labels.id(&name).ok_or_else(|| Error::UnknownName(name.clone()))?;
        let mut seen = BTreeSet::new();
        let mut parents = Vec::with_capacity(records.len());
        for r in records {
            let event = events
                .id(&r.event)
                .ok_or_else(|| Error::UnknownName(r.event.clone()))?;
            if !seen.insert(event) {
                return Err(Error::Duplicate(format!("parent `{}` of label `{name}`", r.event)));
            }
            parents.push(Parent {
                event,
                frequency: r.frequency,
                support: r.support,
                mi: r.mi,
            });
        }
        parents.sort_by_key(|p| p.event);
        out.push(LabelParents { label, parents });
    }
    out.sort_by_key(|l| l.label);
    Ok(GlobalGraph { labels: out })
}

pub fn write_graph<T: Scalar>(
    path: impl AsRef<Path>,
    graph: &GlobalGraph<T>,
    events: &EventVocab,
    labels: &LabelVocab,
) -> Result<()> {
    let path = path.as_ref();
    let text = graph_to_json(graph, events, labels)?;
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_graph<T: Scalar>(
    path: impl AsRef<Path>,
    events: &EventVocab,
    labels: &LabelVocab,
) -> Result<GlobalGraph<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    graph_from_json(&text, events, labels)
}

/// Ground-truth Markov boundaries, indexed by label id.
pub type GroundTruth = Vec<BTreeSet<EventId>>;

pub fn ground_truth_to_json(truth: &GroundTruth, events: &EventVocab, labels: &LabelVocab) -> Result<String> {
    let map: BTreeMap<&str, Vec<&str>> = truth
        .iter()
        .enumerate()
        .map(|(j, set)| {
            (
                labels.name(LabelId::from(j)),
                set.iter().map(|&e| events.name(e)).collect(),
            )
        })
        .collect();
    Ok(serde_json::to_string_pretty(&map)? + "\n")
}

pub fn ground_truth_from_json(text: &str, events: &EventVocab, labels: &LabelVocab) -> Result<GroundTruth> {
    let map: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
    let mut truth = vec![BTreeSet::new(); labels.len()];
    for (name, evs) in map {
        let j = labels.id(&name).ok_or_else(|| Error::UnknownName(name.clone()))?;
        for e in evs {
            let id = events.id(&e).ok_or_else(|| Error::UnknownName(e.clone()))?;
            if !truth[j.index()].insert(id) {
                return Err(Error::Duplicate(format!("event `{e}` in ground truth of `{name}`")));
            }
        }
    }
    Ok(truth)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(id: &str, events: &[u32], labels: Vec<bool>) -> LabeledSequence {
        let events = events
            .iter()
            .enumerate()
            .map(|(k, &e)| (EventId(e), k as f64 * 0.5))
            .collect();
        LabeledSequence::new(id, events, labels).unwrap()
    }

    fn vocabs() -> (EventVocab, LabelVocab) {
        (EventVocab::synthetic(6), LabelVocab::synthetic(2))
    }

    #[test]
    fn sequences_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let seqs = vec![
            seq("a", &[0, 1, 2], vec![true, false]),
            seq("b", &[0, 3], vec![false, false]),
            seq("c", &[0, 5, 5, 4], vec![true, true]),
        ];
        write_sequences(&path, &seqs).unwrap();
        assert_eq!(read_sequences(&path, 6, 2).unwrap(), seqs);
    }

    #[test]
    fn empty_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_sequences(&path, 6, 2).unwrap().is_empty());
    }

    #[test]
    fn label_outside_vector_is_an_error_with_line_number() {
        let text = "{\"id\":\"a\",\"events\":[[0,0.0]],\"labels\":[]}\n{\"id\":\"b\",\"events\":[[0,0.0]],\"labels\":[2]}\n";
        let err = parse_sequences(text.as_bytes(), Path::new("x"), 6, 2).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_event_and_malformed_lines_fail() {
        let unknown = "{\"id\":\"a\",\"events\":[[0,0.0],[9,1.0]],\"labels\":[]}\n";
        assert!(parse_sequences(unknown.as_bytes(), Path::new("x"), 6, 2).is_err());
        let garbage = "not json\n";
        assert!(matches!(
            parse_sequences(garbage.as_bytes(), Path::new("x"), 6, 2),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn parent(e: u32, f: f64) -> Parent<f64> {
        Parent {
            event: EventId(e),
            frequency: f,
            support: 7,
            mi: f / 3.0,
        }
    }

    #[test]
    fn graph_round_trip_keeps_empty_labels() {
        let (ev, lv) = vocabs();
        let g = GlobalGraph {
            labels: vec![
                LabelParents {
                    label: LabelId(0),
                    parents: vec![parent(1, 0.5), parent(2, 0.25), parent(4, 1.0)],
                },
                LabelParents {
                    label: LabelId(1),
                    parents: vec![],
                },
            ],
        };
        let text = graph_to_json(&g, &ev, &lv).unwrap();
        assert_eq!(graph_from_json::<f64>(&text, &ev, &lv).unwrap(), g);
    }

    #[test]
    fn duplicate_parent_is_rejected() {
        let (ev, lv) = vocabs();
        let text = r#"{"y0":[{"event":"x1","frequency":0.5,"support":2,"mi":0.1},
                              {"event":"x1","frequency":0.5,"support":2,"mi":0.1}]}"#;
        assert!(matches!(
            graph_from_json::<f64>(text, &ev, &lv),
            Err(Error::Duplicate(_))
        ));
    }

    #[test]
    fn ground_truth_round_trip() {
        let (ev, lv) = vocabs();
        let truth: GroundTruth = vec![
            [EventId(1), EventId(3)].into_iter().collect(),
            [EventId(2)].into_iter().collect(),
        ];
        let text = ground_truth_to_json(&truth, &ev, &lv).unwrap();
        assert_eq!(ground_truth_from_json(&text, &ev, &lv).unwrap(), truth);
    }

    fn arb_sequence() -> impl Strategy<Value = LabeledSequence> {
        (
            "[a-z0-9]{1,8}",
            proptest::collection::vec((1u32..6, 0.0f64..3.0), 0..12),
            proptest::collection::vec(any::<bool>(), 2),
        )
            .prop_map(|(id, body, labels)| {
                let mut t = 0.0;
                let mut events = vec![(EventId(0), 0.0)];
                for (e, dt) in body {
                    t += dt;
                    events.push((EventId(e), t));
                }
                LabeledSequence::new(id, events, labels).unwrap()
            })
    }

    proptest! {
        #[test]
        fn sequence_serialization_is_identity(seqs in proptest::collection::vec(arb_sequence(), 0..6)) {
            let mut buf = Vec::new();
            write_sequences_to(&mut buf, &seqs).unwrap();
            let back = parse_sequences(&buf[..], Path::new("mem"), 6, 2).unwrap();
            prop_assert_eq!(back, seqs);
        }

        #[test]
        fn graph_serialization_is_identity(
            rows in proptest::collection::btree_map(0u32..2, proptest::collection::btree_map(1u32..6, (0.0f64..1.0, 0u64..100, 0.0f64..2.0), 0..5), 0..3)
        ) {
            let (ev, lv) = vocabs();
            let g = GlobalGraph {
                labels: rows.into_iter().map(|(j, ps)| LabelParents {
                    label: LabelId(j),
                    parents: ps.into_iter().map(|(e, (f, s, mi))| Parent { event: EventId(e), frequency: f, support: s, mi }).collect(),
                }).collect(),
            };
            let text = graph_to_json(&g, &ev, &lv).unwrap();
            prop_assert_eq!(graph_from_json::<f64>(&text, &ev, &lv).unwrap(), g);
        }
    }
}
