#![no_main]
use libfuzzer_sys::fuzz_target;
use sgmus::dataset::DataTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = DataTable::from_csv(text, 0.01, 0, None) {
            let again = DataTable::from_csv(&table.to_csv(), 0.01, 0, None).expect("exported CSV parses");
            assert_eq!(again.columns, table.columns);
            assert_eq!(again.rows(), table.rows());
        }
    }
});
