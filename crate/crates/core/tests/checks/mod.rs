//! Checks shared by the test targets and the acceptance runner. Each returns
//! a one-line summary on success and a description of the first failure
//! otherwise.
#![allow(dead_code)]

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vreid::dataset::{BBox, ImageSize, Keypoint, KeypointSet, NUM_KEYPOINTS};
use vreid::losses::{batch_hard_triplet, softmax_xent, LossWeights, Target, TripletConfig, XentMode};
use vreid::metrics::{
    cmc_curve, distance_matrix, distance_matrix_serial, evaluate, mean_ap, rank_gallery, EvalExtras, EvalProtocol,
    EvalSide, ItemMeta,
};
use vreid::posegeom::{
    normalize_keypoints, pck_evaluate, rasterize_segments, render_heatmaps, KeypointLayout, MapParams, PckParams,
    INPUT_SIZE, MAP_SIZE, NUM_HEATMAPS, NUM_SEGMENTS, POSE_VECTOR_LEN,
};
use vreid::synthgen::GenSpec;
use vreid::toynet::{
    backward, batch_loss, forward, lr_schedule, BatchLabels, LossSettings, LrSchedule, NetDims, ToyNetParams,
    TrainConfig,
};

use crate::oracles::{self, central_difference, relative_error};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: usize = 100;

fn uniform_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.random_range(-1.0..1.0))
}

pub fn softmax_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..INSTANCES * 2 {
        let c = rng.random_range(2..12);
        let logits: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
        let mode = if i % 2 == 0 { XentMode::ClassCount } else { XentMode::Standard };
        let dist: Vec<f64> = {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        let target = if i % 4 < 2 { Target::Class(rng.random_range(0..c)) } else { Target::Distribution(&dist) };
        let (_, analytic) = softmax_xent(&logits, target, mode).map_err(|e| e.to_string())?;
        let numeric = central_difference(&logits, STEP, |x| softmax_xent(x, target, mode).unwrap().0);
        let err = relative_error(&analytic, &numeric, 1e-8);
        ensure(err <= TOL, || format!("softmax instance {i}: relative error {err:.3e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("{} instances, max rel err {worst:.2e}", INSTANCES * 2))
}

/// Smallest gap between a mined distance and its runner-up, and the smallest
/// hinge magnitude. Finite differences are meaningless within a step of
/// either kink.
pub fn triplet_kink_distance(f: &Array2<f64>, ids: &[u32], margin: f64) -> f64 {
    let n = f.nrows();
    let d = |i: usize, j: usize| (&f.row(i) - &f.row(j)).mapv(|v| v * v).sum().sqrt();
    let mut closest = f64::INFINITY;
    for a in 0..n {
        let mut pos: Vec<f64> = (0..n).filter(|&j| j != a && ids[j] == ids[a]).map(|j| d(a, j)).collect();
        let mut neg: Vec<f64> = (0..n).filter(|&j| ids[j] != ids[a]).map(|j| d(a, j)).collect();
        pos.sort_by(|x, y| y.total_cmp(x));
        neg.sort_by(f64::total_cmp);
        if pos.len() > 1 {
            closest = closest.min(pos[0] - pos[1]);
        }
        if neg.len() > 1 {
            closest = closest.min(neg[1] - neg[0]);
        }
        closest = closest.min((margin + pos[0] - neg[0]).abs());
    }
    closest
}

pub fn triplet_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = TripletConfig { margin: 0.3, ..TripletConfig::default() };
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < INSTANCES {
        let p = rng.random_range(2..5);
        let k = rng.random_range(2..5);
        let dim = rng.random_range(2..9);
        let ids: Vec<u32> = (0..p * k).map(|i| (i / k) as u32).collect();
        let f = uniform_matrix(p * k, dim, 1.0, &mut rng);
        if triplet_kink_distance(&f, &ids, cfg.margin) < 1e-3 {
            skipped += 1;
            continue;
        }
        let analytic = batch_hard_triplet(f.view(), &ids, &cfg).map_err(|e| e.to_string())?.grad;
        let flat = f.as_slice().unwrap();
        let numeric = central_difference(flat, STEP, |x| {
            let m = Array2::from_shape_vec(f.raw_dim(), x.to_vec()).unwrap();
            batch_hard_triplet(m.view(), &ids, &cfg).unwrap().loss
        });
        let err = relative_error(analytic.as_slice().unwrap(), &numeric, 1e-8);
        ensure(err <= TOL, || format!("triplet instance {checked}: relative error {err:.3e}"))?;
        worst = worst.max(err);
        checked += 1;
    }
    ensure(skipped < INSTANCES, || format!("too many triplet instances near a kink: {skipped}"))?;
    Ok(format!("{checked} instances ({skipped} near a kink skipped), max rel err {worst:.2e}"))
}

struct NetCase {
    params: ToyNetParams,
    x: Array2<f64>,
    pose: Array2<f64>,
    ids: Vec<usize>,
    colors: Vec<usize>,
    types: Vec<usize>,
}

fn net_case(rng: &mut ChaCha8Rng) -> NetCase {
    let (p, k) = (rng.random_range(2..5), rng.random_range(2..5));
    let n = p * k;
    let dims = NetDims::new(rng.random_range(3..8), rng.random_range(3..7), rng.random_range(2..6), rng.random_range(2..5), p, 3, 2);
    let mut params = ToyNetParams::init(&dims, 0.01, rng).unwrap();
    for t in params.tensors_mut() {
        // Non-zero biases so every code path is exercised.
        if t.len() < 8 {
            t.iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
    NetCase {
        params,
        x: uniform_matrix(n, dims.input, 1.5, rng),
        pose: uniform_matrix(n, POSE_VECTOR_LEN, 0.5, rng),
        ids: (0..n).map(|i| i / k).collect(),
        colors: (0..n).map(|_| rng.random_range(0..3)).collect(),
        types: (0..n).map(|_| rng.random_range(0..2)).collect(),
    }
}

fn net_kink_distance(case: &NetCase, settings: &LossSettings) -> f64 {
    let act = forward(&case.params, case.x.view(), case.pose.view()).unwrap();
    let pre = act.z1.iter().chain(&act.z2).chain(&act.zr).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let ids: Vec<u32> = case.ids.iter().map(|&i| i as u32).collect();
    pre.min(triplet_kink_distance(&act.r, &ids, settings.triplet.margin))
}

pub fn toynet_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let settings = LossSettings::default();
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < INSTANCES {
        let case = net_case(&mut rng);
        if net_kink_distance(&case, &settings) < 1e-3 {
            skipped += 1;
            continue;
        }
        let labels = BatchLabels { ids: &case.ids, color: Some(&case.colors), vtype: Some(&case.types) };
        let act = forward(&case.params, case.x.view(), case.pose.view()).map_err(|e| e.to_string())?;
        let (_, _, grads) = backward(&case.params, &act, &labels, &settings).map_err(|e| e.to_string())?;

        let mut probe = case.params.clone();
        for (t, analytic) in grads.tensors().iter().enumerate() {
            let start = case.params.tensors()[t].to_vec();
            let numeric = central_difference(&start, STEP, |v| {
                probe.tensors_mut()[t].copy_from_slice(v);
                let a = forward(&probe, case.x.view(), case.pose.view()).unwrap();
                batch_loss(&a, &labels, &settings).unwrap().0
            });
            probe.tensors_mut()[t].copy_from_slice(&start);
            let err = relative_error(analytic, &numeric, 1e-7);
            ensure(err <= TOL, || format!("network instance {checked}, tensor {t}: relative error {err:.3e}"))?;
            worst = worst.max(err);
        }
        checked += 1;
    }
    ensure(skipped < 4 * INSTANCES, || format!("too many network instances near a kink: {skipped}"))?;
    Ok(format!("{checked} instances ({skipped} near a kink skipped), max rel err {worst:.2e}"))
}

pub fn sixteen_sample_batch() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let dims = NetDims::new(10, 8, 6, 5, 4, 3, 2);
    let params = ToyNetParams::init(&dims, 0.01, &mut rng).unwrap();
    let x = uniform_matrix(16, 10, 1.0, &mut rng);
    let pose = uniform_matrix(16, POSE_VECTOR_LEN, 0.5, &mut rng);
    let ids: Vec<usize> = (0..16).map(|i| i / 4).collect();
    let colors: Vec<usize> = (0..16).map(|i| i % 3).collect();
    let types: Vec<usize> = (0..16).map(|i| i % 2).collect();
    let labels = BatchLabels { ids: &ids, color: Some(&colors), vtype: Some(&types) };
    let settings = LossSettings { xent_mode: XentMode::Standard, ..LossSettings::default() };
    let act = forward(&params, x.view(), pose.view()).map_err(|e| e.to_string())?;
    let (_, _, grads) = backward(&params, &act, &labels, &settings).map_err(|e| e.to_string())?;
    let flat: Vec<f64> = params.tensors().concat();
    let analytic: Vec<f64> = grads.tensors().concat();
    let mut probe = params.clone();
    let numeric = central_difference(&flat, STEP, |v| {
        let mut off = 0;
        for t in probe.tensors_mut() {
            t.copy_from_slice(&v[off..off + t.len()]);
            off += t.len();
        }
        let a = forward(&probe, x.view(), pose.view()).unwrap();
        batch_loss(&a, &labels, &settings).unwrap().0
    });
    let err = relative_error(&analytic, &numeric, 1e-7);
    ensure(err <= TOL, || format!("16-sample batch: relative error {err:.3e}"))?;
    Ok(format!("{} parameters, rel err {err:.2e}", flat.len()))
}

/// Every identity appears at least twice, and there are at least two.
fn random_ids(n: usize, rng: &mut impl Rng) -> Vec<u32> {
    let groups = rng.random_range(2..=n / 2);
    let mut ids: Vec<u32> = (0..n).map(|i| (i % groups) as u32).collect();
    // Reassign the tail to existing groups only, keeping counts >= 2.
    for id in ids.iter_mut().skip(2 * groups) {
        *id = rng.random_range(0..groups as u32);
    }
    ids
}

pub fn triplet_worked_example() -> Outcome {
    let f = array![[0.0], [2.0], [1.0], [3.0]];
    let t = batch_hard_triplet(f.view(), &['A', 'A', 'B', 'B'], &TripletConfig::default()).map_err(|e| e.to_string())?;
    ensure(t.loss == 1.3, || format!("worked example gave {}", t.loss))?;
    Ok("worked example = 1.3".into())
}

pub fn triplet_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = TripletConfig::default();
    let mut worst = 0.0f64;
    for b in 0..500 {
        let n = rng.random_range(4..=32);
        let d = rng.random_range(1..=16);
        let ids = random_ids(n, &mut rng);
        let f = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let fast = batch_hard_triplet(f.view(), &ids, &cfg).map_err(|e| e.to_string())?;
        let slow = oracles::brute_triplet(f.view(), &ids, cfg.margin);
        let diff = (fast.loss - slow).abs();
        ensure(diff < 1e-9, || format!("batch {b}: {} vs {slow}", fast.loss))?;
        worst = worst.max(diff);
    }
    Ok(format!("500 batches, max diff {worst:.1e}"))
}

pub struct Instance {
    pub q: Array2<f64>,
    pub g: Array2<f64>,
    pub qmeta: Vec<ItemMeta>,
    pub gmeta: Vec<ItemMeta>,
}

/// Integer-valued features make exact distance ties common.
pub fn instance(rng: &mut impl Rng, nq: usize, ng: usize, d: usize) -> Instance {
    let ids = rng.random_range(2..8u32);
    let cams = rng.random_range(1..4u32);
    let coarse = rng.random_bool(0.5);
    let mut feat = |n| {
        Array2::from_shape_fn((n, d), |_| {
            if coarse {
                f64::from(rng.random_range(-2..3i32))
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
    };
    let (q, g) = (feat(nq), feat(ng));
    let mut meta = |n| -> Vec<ItemMeta> {
        (0..n)
            .map(|_| ItemMeta { identity: rng.random_range(0..ids), camera: rng.random_range(0..cams) })
            .collect()
    };
    let (qmeta, gmeta) = (meta(nq), meta(ng));
    Instance { q, g, qmeta, gmeta }
}

fn pairs(m: &[ItemMeta]) -> Vec<(u32, u32)> {
    m.iter().map(|x| (x.identity, x.camera)).collect()
}

fn close9(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

pub fn metric_engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for i in 0..200 {
        let (nq, ng, d) = (rng.random_range(1..20), rng.random_range(1..60), rng.random_range(1..10));
        let inst = instance(&mut rng, nq, ng, d);
        let protocol = EvalProtocol {
            exclude_same_camera_same_id: rng.random_bool(0.7),
            skip_queries_without_positives: rng.random_bool(0.7),
            rank_k_map_k: rng.random_range(1..8),
            cmc_max_rank: rng.random_range(1..10),
            tile_rows: rng.random_range(1..6),
        };
        let naive_d = oracles::naive_distances(inst.q.view(), inst.g.view());
        let oracle = oracles::naive_scores(
            &naive_d,
            &pairs(&inst.qmeta),
            &pairs(&inst.gmeta),
            protocol.exclude_same_camera_same_id,
            protocol.skip_queries_without_positives,
            protocol.rank_k_map_k,
            protocol.cmc_max_rank,
        );
        let report = evaluate(
            EvalSide { features: inst.q.view(), meta: &inst.qmeta },
            EvalSide { features: inst.g.view(), meta: &inst.gmeta },
            &protocol,
            &EvalExtras::default(),
        );
        let dm = distance_matrix(inst.q.view(), inst.g.view(), 3).map_err(|e| e.to_string())?;
        let ranked = rank_gallery(dm.view());
        let via_ranked = mean_ap(&ranked, &inst.qmeta, &inst.gmeta, &protocol, None);
        let Some(oracle) = oracle else {
            ensure(report.is_err() && via_ranked.is_err(), || format!("instance {i}: expected no usable queries"))?;
            continue;
        };
        compared += 1;
        let report = report.map_err(|e| format!("instance {i}: {e}"))?;
        ensure(close9(report.map, oracle.map), || format!("instance {i}: mAP {} vs {}", report.map, oracle.map))?;
        ensure(close9(report.rank_k_map, oracle.rank_k_map), || {
            format!("instance {i}: rank-K mAP {} vs {}", report.rank_k_map, oracle.rank_k_map)
        })?;
        ensure(report.n_queries_used == oracle.used, || format!("instance {i}: query counts differ"))?;
        ensure(report.cmc.len() == oracle.cmc.len() && report.cmc.iter().zip(&oracle.cmc).all(|(a, b)| close9(*a, *b)), || {
            format!("instance {i}: CMC {:?} vs {:?}", report.cmc, oracle.cmc)
        })?;
        ensure(via_ranked.as_ref().is_ok_and(|m| close9(*m, oracle.map)), || format!("instance {i}: mean_ap differs"))?;
        let via_k = mean_ap(&ranked, &inst.qmeta, &inst.gmeta, &protocol, Some(protocol.rank_k_map_k)).map_err(|e| e.to_string())?;
        ensure(close9(via_k, oracle.rank_k_map), || format!("instance {i}: truncated mean_ap differs"))?;
        let cmc = cmc_curve(&ranked, &inst.qmeta, &inst.gmeta, &protocol).map_err(|e| e.to_string())?;
        ensure(cmc == report.cmc, || format!("instance {i}: cmc_curve differs from report"))?;
    }
    ensure(compared > 150, || format!("only {compared} instances had usable queries"))?;
    Ok(format!("200 instances ({compared} with usable queries)"))
}

/// One query, positives at ranks 1 and 3.
pub fn ap_fixtures() -> Outcome {
    let q = [ItemMeta { identity: 1, camera: 0 }];
    let g: Vec<ItemMeta> = [1, 2, 1, 3].iter().map(|&identity| ItemMeta { identity, camera: 1 }).collect();
    let ranked = vec![vec![0, 1, 2, 3]];
    let p = EvalProtocol::default();
    let ap = mean_ap(&ranked, &q, &g, &p, None).map_err(|e| e.to_string())?;
    let ap2 = mean_ap(&ranked, &q, &g, &p, Some(2)).map_err(|e| e.to_string())?;
    ensure((ap - 5.0 / 6.0).abs() < 1e-15, || format!("AP {ap}, expected 5/6"))?;
    ensure(ap2 == 0.5, || format!("AP@2 {ap2}, expected 0.5"))?;
    Ok("AP = 5/6, AP@2 = 0.5".into())
}

pub fn tiled_is_serial() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = instance(&mut rng, 37, 300, 19);
    let bitwise = |a: &Array2<f64>, b: &Array2<f64>| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
    let serial = distance_matrix_serial(inst.q.view(), inst.g.view()).map_err(|e| e.to_string())?;
    for tile in [1, 2, 5, 16, 64, 1000] {
        let tiled = distance_matrix(inst.q.view(), inst.g.view(), tile).map_err(|e| e.to_string())?;
        ensure(bitwise(&serial, &tiled), || format!("tile {tile} differs from serial"))?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().map_err(|e| e.to_string())?;
    let threaded = pool.install(|| distance_matrix(inst.q.view(), inst.g.view(), 4)).map_err(|e| e.to_string())?;
    ensure(bitwise(&serial, &threaded), || "3-thread matrix differs from serial".into())?;
    Ok("6 tile sizes and a 3-thread pool bitwise equal".into())
}

fn rel_close(a: f64, b: f64) -> bool {
    (a / b - 1.0).abs() < 1e-12
}

pub fn protocol_constants() -> Outcome {
    let w = LossWeights::default();
    ensure((w.lambda_htri, w.lambda_xent) == (1.0, 1.0), || format!("identity weights {w:?}"))?;
    ensure((w.lambda_color, w.lambda_type) == (0.125, 0.125), || format!("attribute weights {w:?}"))?;
    let tc = TrainConfig::default();
    ensure(tc.weights == w, || "training uses non-default loss weights".into())?;

    ensure(POSE_VECTOR_LEN == 108 && NUM_KEYPOINTS == 36, || "pose vector length".into())?;
    ensure(NUM_HEATMAPS == 36 && NUM_SEGMENTS == 13, || "pose map channel counts".into())?;
    ensure((MAP_SIZE, INPUT_SIZE) == (64, 256) && MapParams::default().map_size == (64, 64), || "map size".into())?;
    ensure(GenSpec::default().image_size == ImageSize::new(256, 256), || "generated image size".into())?;
    let size = ImageSize::new(256, 256);
    let kps = KeypointSet::new(std::array::from_fn(|k| Keypoint::new(20.0 + 5.0 * k as f64, 100.0, 1.0)))
        .map_err(|e| e.to_string())?;
    let mp = MapParams::default();
    let layout = KeypointLayout::default();
    ensure(normalize_keypoints(&kps, size).map_err(|e| e.to_string())?.as_slice().len() == 108, || "pose vector".into())?;
    ensure(render_heatmaps(&kps, size, &mp).map_err(|e| e.to_string())?.dim() == (36, 64, 64), || "heatmaps".into())?;
    ensure(
        rasterize_segments(&kps, &layout.segments, size, &mp).map_err(|e| e.to_string())?.dim() == (13, 64, 64),
        || "segment maps".into(),
    )?;

    let s = LrSchedule::default();
    ensure(s.lr(0) == 3e-4 && s.lr(19) == 3e-4, || "base learning rate".into())?;
    ensure(rel_close(s.lr(20), 3e-5) && rel_close(s.lr(39), 3e-5), || "first decay".into())?;
    ensure(rel_close(s.lr(40), 3e-6) && rel_close(s.lr(59), 3e-6), || "second decay".into())?;
    ensure(lr_schedule(50, 3e-4, &[], 0.1) == 3e-4, || "empty milestone list".into())?;
    ensure(tc.epochs == 60, || format!("epochs {}", tc.epochs))?;
    ensure(tc.batch_size() == 32 && tc.p * tc.k == 32, || format!("batch {}x{}", tc.p, tc.k))?;

    let pck = PckParams::default();
    ensure(pck.reference_ratio == 0.25, || "PCK reference ratio".into())?;
    let full = PckParams { threshold_multiplier: 1.0, ..pck };
    ensure(full.radius(&BBox { x: 0.0, y: 0.0, w: 60.0, h: 80.0 }) == 25.0, || "PCK radius".into())?;

    let p = EvalProtocol::default();
    ensure(p.rank_k_map_k == 100 && p.cmc_max_rank >= 20, || "retrieval reporting".into())?;
    ensure(p.exclude_same_camera_same_id, || "same-camera filtering".into())?;
    ensure(tc.protocol == p, || "training evaluates with a non-default protocol".into())?;
    Ok("loss weights, pose sizes, lr schedule, batch, PCK, retrieval".into())
}

fn random_gt(rng: &mut ChaCha8Rng, n: usize) -> (Vec<KeypointSet>, Vec<BBox>) {
    (0..n)
        .map(|_| {
            let kps = KeypointSet::new(std::array::from_fn(|_| {
                Keypoint::new(rng.random_range(0.0..200.0), rng.random_range(0.0..150.0), 1.0)
            }))
            .unwrap();
            (kps, BBox { x: 0.0, y: 0.0, w: rng.random_range(20.0..200.0), h: rng.random_range(20.0..150.0) })
        })
        .unzip()
}

fn offset(gt: &[KeypointSet], len: impl Fn(usize, usize) -> f64, rng: &mut ChaCha8Rng) -> Vec<KeypointSet> {
    gt.iter()
        .enumerate()
        .map(|(i, g)| {
            g.map(|k, p| {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let r = len(i, k);
                Keypoint::new(p.x + r * a.cos(), p.y + r * a.sin(), p.confidence)
            })
            .unwrap()
        })
        .collect()
}

pub fn pck_suite(cases: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let layout = KeypointLayout::default();
    for c in 0..cases {
        let n = rng.random_range(1..=6);
        let (gt, boxes) = random_gt(&mut rng, n);
        let exact = pck_evaluate(&gt, &gt, &boxes, &layout.groups, &PckParams::default()).map_err(|e| e.to_string())?;
        ensure(exact.per_group.iter().all(|g| *g == Some(100.0)) && exact.mean == Some(100.0), || {
            format!("case {c}: exact predictions scored {:?}", exact.per_group)
        })?;

        let params = PckParams { threshold_multiplier: rng.random_range(0.1..2.0), ..PckParams::default() };
        let excess = rng.random_range(1.001..3.0);
        let far = offset(&gt, |i, _| excess * params.radius(&boxes[i]), &mut rng);
        let r = pck_evaluate(&far, &gt, &boxes, &layout.groups, &params).map_err(|e| e.to_string())?;
        ensure(r.per_group.iter().all(|g| *g == Some(0.0)) && r.mean == Some(0.0), || {
            format!("case {c}: far predictions scored {:?}", r.per_group)
        })?;

        let lens: Vec<f64> = (0..n * NUM_KEYPOINTS).map(|_| rng.random_range(0.0..60.0)).collect();
        let jittered = offset(&gt, |i, k| lens[i * NUM_KEYPOINTS + k], &mut rng);
        let at = |m: f64| {
            let p = PckParams { threshold_multiplier: m, ..PckParams::default() };
            pck_evaluate(&jittered, &gt, &boxes, &layout.groups, &p)
        };
        let m1 = rng.random_range(0.0..2.0);
        let (lo, hi) = (at(m1).map_err(|e| e.to_string())?, at(m1 + rng.random_range(0.0..2.0)).map_err(|e| e.to_string())?);
        let monotone = lo.per_group.iter().zip(&hi.per_group).all(|(a, b)| a.unwrap() <= b.unwrap());
        ensure(monotone && lo.mean.unwrap() <= hi.mean.unwrap(), || format!("case {c}: accuracy fell as the threshold grew"))?;
    }
    Ok(format!("{cases} random cases: exact 100, beyond radius 0, monotone"))
}
