#![no_main]
use libfuzzer_sys::fuzz_target;
use sgmus::dataset::DataTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = DataTable::from_bytes(data) {
        let again = DataTable::from_bytes(&table.to_bytes()).expect("re-encoded table decodes");
        assert_eq!(again.columns, table.columns);
        assert_eq!(again.rows(), table.rows());
        assert!(again.values.iter().zip(&table.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
