use std::sync::Arc;

use fracfree::cache::TableCache;
use fracfree_core::model::{build_grid, GridSpec};
use fracfree_core::quadrature::assemble_table;

#[test]
fn tables_round_trip_through_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = TableCache::new(dir.path());
    for (n, m) in [(1, 12), (2, 4)] {
        let g = Arc::new(build_grid(GridSpec::new(n, 1.0, m)).unwrap());
        let fresh = assemble_table(&g, 0.6, 1e-9).unwrap();
        let first = cache.table(&g, 0.6, 1e-9).unwrap();
        assert!(cache.path_for(&g, 0.6, 1e-9).exists());
        let second = cache.table(&g, 0.6, 1e-9).unwrap();
        assert_eq!(*first, fresh);
        assert_eq!(*second, fresh);
    }
}

#[test]
fn keys_separate_parameters_and_corrupt_files_are_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let cache = TableCache::new(dir.path());
    let g = Arc::new(build_grid(GridSpec::new(1, 1.0, 8)).unwrap());
    let h = Arc::new(build_grid(GridSpec::new(1, 1.0, 8).with_truncation_radius(16.0)).unwrap());
    let a = cache.path_for(&g, 0.6, 1e-9);
    assert_ne!(a, cache.path_for(&g, 0.7, 1e-9));
    assert_ne!(a, cache.path_for(&g, 0.6, 1e-8));
    assert_ne!(a, cache.path_for(&h, 0.6, 1e-9));
    cache.table(&g, 0.6, 1e-9).unwrap();
    let mut bytes = std::fs::read(&a).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&a, bytes).unwrap();
    let t = cache.table(&g, 0.6, 1e-9).unwrap();
    assert_eq!(*t, assemble_table(&g, 0.6, 1e-9).unwrap());
}
