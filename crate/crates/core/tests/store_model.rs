//! Store reads and scans against an ordered in-memory model.

use std::collections::BTreeMap;

use proptest::prelude::*;
use shoal::store::{RowKey, Store, TableName};
use shoal::types::Timestamp;

#[derive(Debug, Clone)]
enum Op {
    Put { row: u8, column: u8, t: u64, value: u8 },
    Delete { row: u8, column: u8 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u8..20, 0u8..4, 0u64..1_000, any::<u8>()).prop_map(|(row, column, t, value)| Op::Put { row, column, t, value }),
        1 => (0u8..20, 0u8..4).prop_map(|(row, column)| Op::Delete { row, column }),
    ]
}

fn key(row: u8) -> RowKey {
    RowKey::new(format!("{row:02}").into_bytes())
}

type Model = BTreeMap<RowKey, BTreeMap<Vec<u8>, Vec<(u64, Vec<u8>)>>>;

proptest! {
    #[test]
    fn store_matches_model(ops in prop::collection::vec(op(), 1..200), lo in 0u8..20, span in 0u8..20) {
        let store = Store::in_memory();
        let mut model = Model::new();
        for op in &ops {
            match *op {
                Op::Put { row, column, t, value } => {
                    store.put(TableName::Location, &key(row), "loc", &[column], vec![value], Timestamp(t));
                    model.entry(key(row)).or_default().entry(vec![column]).or_default().push((t, vec![value]));
                }
                Op::Delete { row, column } => {
                    let existed = model.get_mut(&key(row)).and_then(|r| r.remove(&vec![column])).is_some();
                    if model.get(&key(row)).is_some_and(|r| r.is_empty()) {
                        model.remove(&key(row));
                    }
                    prop_assert_eq!(store.delete(TableName::Location, &key(row), "loc", &[column]), existed);
                }
            }
        }
        for (row, columns) in &model {
            for (column, versions) in columns {
                let newest = versions.iter().max_by_key(|(t, _)| *t).unwrap();
                let got = store.latest(TableName::Location, row, "loc", column).unwrap().unwrap();
                prop_assert_eq!(got.timestamp, Timestamp(newest.0));
            }
            let cells = store.get_row(TableName::Location, row).unwrap();
            prop_assert_eq!(cells.len(), columns.values().map(Vec::len).sum::<usize>());
        }
        let (start, end) = (key(lo), key(lo.saturating_add(span)));
        let scanned: Vec<RowKey> = store.scan_range(TableName::Location, &start, &end).unwrap().into_iter().map(|(k, _)| k).collect();
        let expected: Vec<RowKey> = model.range(start..end).map(|(k, _)| k.clone()).collect();
        prop_assert_eq!(scanned, expected);
    }
}
