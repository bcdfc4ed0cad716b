mod checks;
mod oracles;

use checks::instance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vreid::metrics::{distance_matrix, evaluate, EvalExtras, EvalProtocol, EvalSide, ItemMeta};

fn pairs(m: &[ItemMeta]) -> Vec<(u32, u32)> {
    m.iter().map(|x| (x.identity, x.camera)).collect()
}

#[test]
fn engine_matches_naive_reference() {
    checks::metric_engine().unwrap();
}

#[test]
fn hand_fixtures() {
    checks::ap_fixtures().unwrap();
}

#[test]
fn distances_match_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let inst = instance(&mut rng, 20, 30, 8);
        let fast = distance_matrix(inst.q.view(), inst.g.view(), 7).unwrap();
        let naive = oracles::naive_distances(inst.q.view(), inst.g.view());
        assert!(fast.iter().zip(&naive).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

#[test]
fn tiled_matrix_is_bitwise_serial() {
    checks::tiled_is_serial().unwrap();
}

#[test]
fn larger_instance_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut inst = instance(&mut rng, 200, 2000, 16);
    // A single camera would make every match junk.
    for m in inst.qmeta.iter_mut().chain(inst.gmeta.iter_mut()) {
        m.camera = rng.random_range(0..4);
    }
    let protocol = EvalProtocol::default();
    let report = evaluate(
        EvalSide { features: inst.q.view(), meta: &inst.qmeta },
        EvalSide { features: inst.g.view(), meta: &inst.gmeta },
        &protocol,
        &EvalExtras::default(),
    )
    .unwrap();
    let naive = oracles::naive_distances(inst.q.view(), inst.g.view());
    let oracle = oracles::naive_scores(&naive, &pairs(&inst.qmeta), &pairs(&inst.gmeta), true, true, 100, 20).unwrap();
    assert!((report.map - oracle.map).abs() < 1e-9);
    assert!((report.rank_k_map - oracle.rank_k_map).abs() < 1e-9);
}
