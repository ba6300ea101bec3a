use mlsg_core::semantic::{build_semantic_graph, sample_walks, WalkConfig};
use mlsg_core::synthetic::{two_blob_dataset, BlobConfig};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn walks_and_ppmi_do_not_depend_on_thread_count() {
    let ds = two_blob_dataset(&BlobConfig::default()).unwrap();
    let cfg = WalkConfig {
        gamma: 10,
        seed: 9,
        ..WalkConfig::default()
    };
    let one = in_pool(1, || sample_walks(&ds.topology, &cfg).unwrap());
    let four = in_pool(4, || sample_walks(&ds.topology, &cfg).unwrap());
    assert_eq!(one, four);
    let (f1, p1) = in_pool(1, || build_semantic_graph(&ds.topology, &cfg).unwrap());
    let (f3, p3) = in_pool(3, || build_semantic_graph(&ds.topology, &cfg).unwrap());
    assert_eq!(f1, f3);
    assert_eq!(p1.normalized, p3.normalized);
}
