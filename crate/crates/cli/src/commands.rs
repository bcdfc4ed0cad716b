use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use vreid::dataset::{
    load_embeddings, load_manifest, save_embeddings, validate_pairing, write_manifest, DatasetManifest, EmbeddingSet,
    Finding, KeypointSet, Split,
};
use vreid::metrics::{
    evaluate, intra_inter_ratio, top_matches, EvalExtras, EvalProtocol, EvalReport, EvalSide, ItemMeta,
};
use vreid::posegeom::{pck_evaluate, BodyPart, KeypointLayout, PckParams, PoseChannels};
use vreid::synthgen::{generate_dataset, Preset};
use vreid::toynet::{build_inputs, extract_features, train, TrainConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{pct, Table};

type Result<T> = std::result::Result<T, CliError>;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const POSE_FILE: &str = "pose.bin";

/// Where a command reads its manifest and feature matrix from.
#[derive(Debug, Clone, Default)]
pub struct DataArgs {
    pub data: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

impl DataArgs {
    /// Flags first, then config paths, then files inside the data directory.
    fn resolve(&self, cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
        let dir = self.data.clone().or_else(|| cfg.paths.data.clone());
        let pick = |flag: &Option<PathBuf>, conf: &Option<PathBuf>, name: &str| {
            flag.clone()
                .or_else(|| conf.clone())
                .or_else(|| dir.as_ref().map(|d| d.join(name)))
                .ok_or_else(|| CliError::Usage(format!("no {name} given: pass --data DIR or the file path")))
        };
        Ok((
            pick(&self.manifest, &cfg.paths.manifest, MANIFEST_FILE)?,
            pick(&self.embeddings, &cfg.paths.embeddings, EMBEDDINGS_FILE)?,
        ))
    }

    fn load(&self, cfg: &RunConfig, require_keypoints: bool) -> Result<(DatasetManifest, EmbeddingSet)> {
        let (m, e) = self.resolve(cfg)?;
        let manifest = load_manifest(&m)?;
        let emb = load_embeddings(&e)?;
        let report = validate_pairing(&manifest, &emb, require_keypoints);
        if !report.is_empty() {
            return Err(CliError::Findings(report.findings));
        }
        Ok((manifest, emb))
    }
}

/// An explicit seed, else the seed of the generator that made the data.
fn seed_for(explicit: Option<u64>, manifest: &DatasetManifest) -> u64 {
    explicit.or(manifest.seed).unwrap_or(0)
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(vreid::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// The report's JSON with the run seed added.
fn stamped(report: &impl Serialize, seed: u64) -> Result<Value> {
    let mut v = serde_json::to_value(report).map_err(vreid::Error::from)?;
    if let Value::Object(m) = &mut v {
        m.insert("seed".into(), json!(seed));
    }
    Ok(v)
}

fn load_layout(path: Option<&Path>) -> Result<KeypointLayout> {
    Ok(path.map(KeypointLayout::load).transpose()?.unwrap_or_default())
}

fn retrieval_table(rows: &[(&str, &EvalReport)]) -> Table {
    let mut t = Table::new(["", "mAP", "Rank-1", "Rank-5", "Rank-20"]);
    for (name, r) in rows {
        let at = |k| r.rank(k).map(|v| 100.0 * v);
        t.row([name.to_string(), pct(Some(100.0 * r.map)), pct(at(1)), pct(at(5)), pct(at(20))]);
    }
    t
}

fn split_counts(m: &DatasetManifest) -> Value {
    let n = |s| m.records.iter().filter(|r| r.split == s).count();
    json!({ "train": n(Split::Train), "query": n(Split::Query), "gallery": n(Split::Gallery) })
}

pub fn gen(cfg: &RunConfig, preset: Option<Preset>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = match preset {
        Some(p) => p.spec(),
        None => cfg.gen.clone().unwrap_or_default(),
    };
    spec.seed = seed.unwrap_or(spec.seed);
    let data = generate_dataset(&spec)?;
    create_dir(out)?;
    write_manifest(out.join(MANIFEST_FILE), &data.manifest)?;
    save_embeddings(out.join(EMBEDDINGS_FILE), &data.embeddings)?;
    save_embeddings(out.join(POSE_FILE), &data.poses)?;

    let ids: Vec<u32> = data.manifest.records.iter().map(|r| r.identity).collect();
    let ratio = intra_inter_ratio(data.embeddings.to_f64().view(), &ids)?;
    let counts = split_counts(&data.manifest);
    write_json(
        &out.join("gen_summary.json"),
        &json!({
            "seed": spec.seed,
            "preset": preset.map(Preset::name),
            "identities": spec.n_identities,
            "samples": data.manifest.len(),
            "splits": counts,
            "variability_ratio": ratio,
            "spec": spec,
        }),
    )?;
    println!(
        "generated {} samples of {} identities (seed {})",
        data.manifest.len(),
        spec.n_identities,
        spec.seed
    );
    println!(
        "train {}  query {}  gallery {}  intra/inter ratio {ratio:.4}",
        counts["train"], counts["query"], counts["gallery"]
    );
    Ok(())
}

fn side_of(manifest: &DatasetManifest, feats: &EmbeddingSet, split: Split) -> (Vec<usize>, ndarray::Array2<f64>, Vec<ItemMeta>) {
    let rows = manifest.indices_of(split);
    let meta = rows
        .iter()
        .map(|&i| ItemMeta { identity: manifest.records[i].identity, camera: manifest.records[i].camera })
        .collect();
    let x = feats.select_f64(&rows);
    (rows, x, meta)
}

pub struct EvalArgs {
    pub data: DataArgs,
    pub rank_k: Option<usize>,
    pub variability: bool,
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let (manifest, emb) = args.data.load(cfg, false)?;
    let seed = seed_for(seed, &manifest);
    let mut protocol = cfg.protocol;
    if let Some(k) = args.rank_k {
        protocol.rank_k_map_k = k;
    }
    let (_, qx, qm) = side_of(&manifest, &emb, Split::Query);
    let (_, gx, gm) = side_of(&manifest, &emb, Split::Gallery);
    let extras = EvalExtras { variability_ratio: args.variability, ..EvalExtras::default() };
    let report = evaluate(
        EvalSide { features: qx.view(), meta: &qm },
        EvalSide { features: gx.view(), meta: &gm },
        &protocol,
        &extras,
    )?;
    create_dir(out)?;
    write_json(&out.join("eval_report.json"), &stamped(&report, seed)?)?;
    println!("{}", retrieval_table(&[("eval", &report)]).render());
    println!(
        "rank-{} mAP {:.2}  queries used {}  skipped {}",
        report.rank_k,
        100.0 * report.rank_k_map,
        report.n_queries_used,
        report.n_queries_skipped
    );
    if let Some(r) = report.variability_ratio {
        println!("intra/inter ratio {r:.4}");
    }
    Ok(())
}

pub struct PckArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub layout: Option<PathBuf>,
    pub threshold_multiplier: Option<f64>,
}

pub fn pck(cfg: &RunConfig, args: &PckArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let pred = load_manifest(&args.pred)?;
    let gt = load_manifest(&args.gt)?;
    let seed = seed_for(seed, &gt);
    let layout = load_layout(args.layout.as_deref().or(cfg.paths.layout.as_deref()))?;
    let mut params = PckParams::from(cfg.pck);
    if let Some(m) = args.threshold_multiplier {
        params.threshold_multiplier = m;
    }

    let by_id: HashMap<&str, &KeypointSet> = pred
        .records
        .iter()
        .filter_map(|r| r.keypoints.as_ref().map(|k| (r.image_id.as_str(), k)))
        .collect();
    let mut findings = Vec::new();
    let (mut p, mut g, mut boxes) = (Vec::new(), Vec::new(), Vec::new());
    for r in &gt.records {
        match (by_id.get(r.image_id.as_str()), &r.keypoints) {
            (Some(pk), Some(gk)) => {
                p.push((*pk).clone());
                g.push(gk.clone());
                boxes.push(r.bbox);
            }
            _ => findings.push(Finding::MissingKeypoints { image_id: r.image_id.clone() }),
        }
    }
    if !findings.is_empty() {
        return Err(CliError::Findings(findings));
    }
    let report = pck_evaluate(&p, &g, &boxes, &layout.groups, &params)?;
    create_dir(out)?;
    write_json(&out.join("pck_report.json"), &stamped(&report, seed)?)?;

    let mut header: Vec<String> = BodyPart::ALL.iter().map(|b| b.name().to_string()).collect();
    header.push("mean".into());
    let mut t = Table::new(header);
    t.row(report.per_group.iter().copied().chain([report.mean]).map(pct));
    println!("{}", t.render());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Zero-mask the pose vector concatenation.
    K,
    /// Drop the color and type heads.
    Mt,
    /// No pose maps in the descriptor.
    PoseChannels,
}

pub struct TrainArgs {
    pub data: DataArgs,
    pub layout: Option<PathBuf>,
    pub ablate: Vec<Ablation>,
    pub pose_channels: Option<PoseChannels>,
    pub epochs: Option<usize>,
}

/// The training configuration after applying flags.
pub fn train_config(cfg: &RunConfig, args: &TrainArgs) -> TrainConfig {
    let mut tc = cfg.train.clone();
    tc.protocol = cfg.protocol;
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    if let Some(c) = args.pose_channels {
        tc.pose_channels = c;
    }
    for a in &args.ablate {
        match a {
            Ablation::K => tc.use_pose_vector = false,
            Ablation::Mt => tc.multitask = false,
            Ablation::PoseChannels => tc.pose_channels = PoseChannels::None,
        }
    }
    tc
}

pub fn train_cmd(cfg: &RunConfig, args: &TrainArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let (manifest, emb) = args.data.load(cfg, true)?;
    let seed = seed_for(seed, &manifest);
    let layout = load_layout(args.layout.as_deref().or(cfg.paths.layout.as_deref()))?;
    let tc = train_config(cfg, args);
    let inputs = build_inputs(&manifest, &emb, &layout, tc.pose_channels, tc.pool_grid)?;
    let outcome = train(&tc, &inputs, seed)?;

    create_dir(out)?;
    write_json(&out.join("model.json"), &json!({ "seed": seed, "model": outcome.model }))?;
    let history_path = out.join("history.jsonl");
    let mut lines = serde_json::to_string(&json!({ "header": { "seed": seed } })).map_err(vreid::Error::from)?;
    lines.push('\n');
    for h in &outcome.history {
        lines.push_str(&serde_json::to_string(h).map_err(vreid::Error::from)?);
        lines.push('\n');
    }
    fs::File::create(&history_path)
        .and_then(|mut f| f.write_all(lines.as_bytes()))
        .map_err(|e| CliError::io(&history_path, e))?;
    write_json(
        &out.join("train_summary.json"),
        &json!({
            "seed": seed,
            "epochs": outcome.history.len(),
            "ablate": args.ablate,
            "final_loss": outcome.history.last().map(|h| h.loss),
            "untrained": outcome.untrained,
            "trained": outcome.trained,
            "config": tc,
        }),
    )?;
    write_json(&out.join("eval_report.json"), &stamped(&outcome.trained, seed)?)?;
    save_embeddings(out.join("features.bin"), &extract_features(&outcome.model, &inputs)?)?;

    println!("{}", retrieval_table(&[("untrained", &outcome.untrained), ("trained", &outcome.trained)]).render());
    if let (Some(c), Some(t)) = (outcome.trained.color_accuracy, outcome.trained.type_accuracy) {
        println!("color accuracy {c:.2}  type accuracy {t:.2}");
    }
    Ok(())
}

pub struct RankArgs {
    pub data: DataArgs,
    pub query: String,
    pub top: usize,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RankEntry<'a> {
    rank: usize,
    image_id: &'a str,
    identity: u32,
    camera: u32,
    distance: f64,
    is_match: bool,
}

pub fn rank(cfg: &RunConfig, args: &RankArgs, seed: Option<u64>) -> Result<()> {
    let (manifest, emb) = args.data.load(cfg, false)?;
    let seed = seed_for(seed, &manifest);
    let q = manifest
        .position_of(&args.query)
        .ok_or_else(|| CliError::Usage(format!("query {:?} is not in the manifest", args.query)))?;
    let rec = &manifest.records[q];
    if rec.split != Split::Query {
        return Err(CliError::Usage(format!("{:?} is a {:?} image, not a query", args.query, rec.split)));
    }
    let qx = emb.select_f64(&[q]);
    let qm = [ItemMeta { identity: rec.identity, camera: rec.camera }];
    let (rows, gx, gm) = side_of(&manifest, &emb, Split::Gallery);
    let protocol: EvalProtocol = cfg.protocol;
    let matches = top_matches(
        EvalSide { features: qx.view(), meta: &qm },
        EvalSide { features: gx.view(), meta: &gm },
        &protocol,
        args.top,
    )?;
    let m = &matches[0];
    let entries: Vec<RankEntry> = m
        .gallery
        .iter()
        .zip(&m.distances)
        .zip(&m.is_match)
        .enumerate()
        .map(|(i, ((&g, &d), &ok))| {
            let r = &manifest.records[rows[g]];
            RankEntry { rank: i + 1, image_id: &r.image_id, identity: r.identity, camera: r.camera, distance: d, is_match: ok }
        })
        .collect();

    let mut t = Table::new(["rank", "image_id", "identity", "camera", "distance", "match"]);
    for e in &entries {
        t.row([
            e.rank.to_string(),
            e.image_id.to_string(),
            e.identity.to_string(),
            e.camera.to_string(),
            format!("{:.4}", e.distance),
            e.is_match.to_string(),
        ]);
    }
    println!("query {} (identity {}, camera {})", args.query, rec.identity, rec.camera);
    println!("{}", t.render());
    if let Some(out) = &args.out {
        create_dir(out)?;
        write_json(
            &out.join(format!("rank_{}.json", args.query)),
            &json!({ "seed": seed, "query": args.query, "matches": entries }),
        )?;
    }
    Ok(())
}
