use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use floorloc_core::contrastive::{mine_all, write_manifest, LinearCropEmbedder};
use floorloc_core::experiment::{embedder_study, mining_dataset, study_worlds, sweep, sweep_csv, SweepParam};
use floorloc_core::floorplan::{load_floorplan, render_gt_rays, save_floorplan};
use floorloc_core::pose_scoring::argmax_pose;
use floorloc_core::synth::{
    generate_world, sample_free_poses, simulate_observation, Observation, OracleEmbedder, OracleEmbedderSpec, World,
};
use floorloc_core::{
    evaluate, CropEmbedder, EmbedderPair, Error, EvalRecord, FloorPlan, Localization, Localizer, Pose,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::failure::Failure;

type Outcome = Result<(), Failure>;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::from_io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    write(path, serde_json::to_string_pretty(value).expect("value serializes") + "\n")
}

fn create_dir(path: &Path) -> Outcome {
    fs::create_dir_all(path).map_err(|e| Failure::from_io(path, e))
}

#[derive(Debug, Deserialize)]
struct PoseRow {
    x: f64,
    y: f64,
    theta: f64,
}

/// Poses from a CSV with at least `x,y,theta` columns.
pub fn read_poses(path: &Path) -> Result<Vec<Pose>, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::from_io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize::<PoseRow>()
        .map(|row| {
            let r = row.map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
            Ok(Pose::new(r.x, r.y, r.theta))
        })
        .collect()
}

fn poses_csv(poses: &[Pose]) -> String {
    let mut s = String::from("x,y,theta\n");
    for p in poses {
        let _ = writeln!(s, "{},{},{}", p.x, p.y, p.theta);
    }
    s
}

/// The map to work on and its query poses: read from the configured inputs
/// when given, otherwise generated from the world spec.
fn map_and_poses(cfg: &RunConfig) -> Result<(FloorPlan, Vec<Pose>), Failure> {
    let (map, sampled) = match &cfg.inputs.map {
        Some(path) => {
            let map = load_floorplan(path)?;
            (map, None)
        }
        None => {
            let world = generate_world(&cfg.world)?;
            (world.map, Some(world.gt_poses))
        }
    };
    let poses = match (&cfg.inputs.poses, sampled) {
        (Some(path), _) => read_poses(path)?,
        (None, Some(poses)) => poses,
        (None, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.world.seed);
            sample_free_poses(&map, cfg.world.n_gt_poses, cfg.world.clearance_m, &mut rng)?
        }
    };
    Ok((map, poses))
}

#[derive(Serialize)]
struct RoomLayout<'a> {
    rooms: &'a [[usize; 4]],
    room_pitch_cells: Option<usize>,
}

pub fn gen_world(cfg: &RunConfig, out: &Path) -> Outcome {
    let world = generate_world(&cfg.world)?;
    save_floorplan(&world.map, &out.join("map.pgm"))?;
    let mut s = String::from("x,y,theta,room\n");
    for p in &world.gt_poses {
        let _ = writeln!(s, "{},{},{},{}", p.x, p.y, p.theta, world.room_at(p.x, p.y));
    }
    write(&out.join("gt_poses.csv"), s)?;
    write_json(
        &out.join("rooms.json"),
        &RoomLayout {
            rooms: &world.rooms,
            room_pitch_cells: world.room_pitch_cells,
        },
    )
}

pub fn cast(cfg: &RunConfig, out: &Path) -> Outcome {
    let (map, poses) = map_and_poses(cfg)?;
    let fan = &cfg.experiment.fan;
    let mut s = String::from("pose,ray,bearing,depth,hit\n");
    for (k, pose) in poses.iter().enumerate() {
        let rays = render_gt_rays(&map, pose, fan)?;
        for (i, (d, hit)) in rays.depths.iter().zip(&rays.hits).enumerate() {
            let _ = writeln!(s, "{k},{i},{:.9},{:.9},{}", rays.bearing(pose.theta, i), d, *hit as u8);
        }
    }
    write(&out.join("poses.csv"), poses_csv(&poses))?;
    write(&out.join("rays.csv"), s)
}

fn simulate_all(cfg: &RunConfig, map: &FloorPlan, poses: &[Pose]) -> Result<Vec<Observation>, Failure> {
    let e = &cfg.experiment;
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| Ok(simulate_observation(map, p, &e.fan, &e.noise, e.noise_seed.wrapping_add(i as u64))?))
        .collect()
}

fn observations_jsonl(obs: &[Observation]) -> String {
    obs.iter()
        .map(|o| serde_json::to_string(o).expect("observation serializes") + "\n")
        .collect()
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Outcome {
    let (map, poses) = map_and_poses(cfg)?;
    let obs = simulate_all(cfg, &map, &poses)?;
    write(&out.join("poses.csv"), poses_csv(&poses))?;
    write(&out.join("observations.jsonl"), observations_jsonl(&obs))
}

fn read_observations(path: &Path) -> Result<Vec<Observation>, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::from_io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(n, line)| {
            let line = line.map_err(|e| Failure::from_io(path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| Failure::runtime(format!("{} line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// Geometry-side embedder: a trained linear model when configured, else the oracle.
enum Geometry {
    Oracle(OracleEmbedder),
    Linear(LinearCropEmbedder),
}

impl Geometry {
    fn as_dyn(&self) -> &dyn CropEmbedder {
        match self {
            Geometry::Oracle(o) => o,
            Geometry::Linear(l) => l,
        }
    }
}

fn embedders(cfg: &RunConfig) -> Result<(OracleEmbedder, Geometry), Failure> {
    let e = &cfg.experiment;
    let base = e.oracle_for(&e.crop);
    match &cfg.inputs.embedder {
        None => {
            let oracle = OracleEmbedder::new(base)?;
            Ok((oracle.clone(), Geometry::Oracle(oracle)))
        }
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::from_io(path, e))?;
            let linear: LinearCropEmbedder = serde_json::from_str(&text)
                .map_err(|err| Failure::runtime(format!("{}: {err}", path.display())))?;
            let oracle = OracleEmbedder::new(OracleEmbedderSpec { dim: linear.dim, ..base })?;
            Ok((oracle, Geometry::Linear(linear)))
        }
    }
}

#[derive(Serialize)]
struct QueryPoses {
    pose: Pose,
    depth_only: Pose,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<Pose>,
}

fn candidates_csv(loc: &Localization) -> String {
    let mut s = String::from("rank,x,y,theta,dafpm,similarity,dpm,fused\n");
    for (k, c) in loc.candidates.iter().enumerate() {
        let _ = writeln!(
            s,
            "{k},{:.6},{:.6},{:.6},{:.9e},{:.9},{:.9},{:.9e}",
            c.pose.x, c.pose.y, c.pose.theta, c.score, loc.similarities[k], loc.dpm[k], loc.fused[k]
        );
    }
    s
}

fn dump_query(dir: &Path, loc: &Localization, truth: Option<Pose>) -> Outcome {
    create_dir(dir)?;
    write_json(
        &dir.join("pose.json"),
        &QueryPoses {
            pose: loc.pose,
            depth_only: argmax_pose(&loc.dafpm)?,
            truth,
        },
    )?;
    loc.dafpm.write_binary(&dir.join("dafpm.bin"))?;
    loc.dafpm.write_graymap(&dir.join("dafpm.pgm"))?;
    write(&dir.join("candidates.csv"), candidates_csv(loc))
}

pub fn localize(cfg: &RunConfig, out: &Path, dump: usize) -> Outcome {
    let (map, poses) = map_and_poses(cfg)?;
    let (obs, truth) = match &cfg.inputs.observations {
        Some(path) => {
            let obs = read_observations(path)?;
            // poses only count as ground truth when explicitly supplied
            let truth = match &cfg.inputs.poses {
                Some(_) if poses.len() == obs.len() => Some(poses),
                Some(_) => {
                    return Err(Failure::config(format!(
                        "{} observations but {} poses",
                        obs.len(),
                        poses.len()
                    )))
                }
                None => None,
            };
            (obs, truth)
        }
        None => (simulate_all(cfg, &map, &poses)?, Some(poses)),
    };
    let e = &cfg.experiment;
    let localizer = Localizer::new(&map, &e.grid, &e.fan, e.sigma, e.crop)?;
    let (visual, geometry) = embedders(cfg)?;
    let pair = EmbedderPair {
        visual: &visual,
        geometry: geometry.as_dyn(),
    };
    let mut predicted = Vec::with_capacity(obs.len());
    for (i, o) in obs.iter().enumerate() {
        let loc = localizer.localize(&o.predicted, &o.signature, pair, &e.disambig)?;
        let t = truth.as_ref().map(|t| t[i]);
        if i < dump {
            dump_query(&out.join(format!("q{i:04}")), &loc, t)?;
        }
        predicted.push(loc.pose);
    }
    write(&out.join("predictions.csv"), poses_csv(&predicted))?;
    if let Some(truth) = truth {
        write(&out.join("truth.csv"), poses_csv(&truth))?;
        let records: Vec<EvalRecord> = predicted.iter().zip(&truth).map(|(p, t)| EvalRecord::new(*p, *t)).collect();
        let report = evaluate(&records)?;
        report.write_json(&out.join("report.json"))?;
        report.write_csv(&out.join("report.csv"))?;
    }
    Ok(())
}

pub fn mine(cfg: &RunConfig, out: &Path) -> Outcome {
    let s = &cfg.study;
    let data = mining_dataset(study_worlds(&cfg.world, s.n_worlds)?);
    let sets = mine_all(&data, &s.perturb, &s.mining, &cfg.experiment.crop)?;
    write_manifest(&sets, &out.join("mined"))?;
    Ok(())
}

#[derive(Serialize)]
struct StudyReport {
    n_train: usize,
    n_holdout: usize,
    retrieval_candidates: usize,
    train_retrieval: f64,
    holdout_retrieval: f64,
    initial_loss: f64,
    final_loss: f64,
}

pub fn train_embedder(cfg: &RunConfig, out: &Path) -> Outcome {
    let study = embedder_study(&cfg.world, &cfg.experiment, &cfg.study)?;
    let trace = &study.outcome.loss_trace;
    let mut s = String::from("epoch,loss\n");
    for (k, l) in trace.iter().enumerate() {
        let _ = writeln!(s, "{k},{l:.9}");
    }
    write(&out.join("loss_trace.csv"), s)?;
    write_json(&out.join("embedder.json"), &study.outcome.embedder)?;
    write_json(
        &out.join("study.json"),
        &StudyReport {
            n_train: study.n_train,
            n_holdout: study.n_holdout,
            retrieval_candidates: cfg.study.retrieval_candidates,
            train_retrieval: study.train_retrieval,
            holdout_retrieval: study.holdout_retrieval,
            initial_loss: trace[0],
            final_loss: *trace.last().expect("trace has the initial loss"),
        },
    )
}

pub fn eval(cfg: &RunConfig, out: &Path) -> Outcome {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| Failure::config(format!("eval needs a {what} file (--{what} or inputs.{what})")))
    };
    let predicted = read_poses(&need(&cfg.inputs.predictions, "predictions")?)?;
    let truth = read_poses(&need(&cfg.inputs.truth, "truth")?)?;
    if predicted.len() != truth.len() {
        return Err(Failure::config(format!(
            "{} predictions but {} ground-truth poses",
            predicted.len(),
            truth.len()
        )));
    }
    let records: Vec<EvalRecord> = predicted.iter().zip(&truth).map(|(p, t)| EvalRecord::new(*p, *t)).collect();
    let report = evaluate(&records)?;
    report.write_json(&out.join("report.json"))?;
    report.write_csv(&out.join("report.csv"))?;
    Ok(())
}

pub fn run_sweep(cfg: &RunConfig, out: &Path, param: SweepParam, values: &[f64]) -> Outcome {
    let world: World = generate_world(&cfg.world)?;
    let rows = sweep(&world, &cfg.experiment, param, values).map_err(|e| match e {
        Error::Validation(m) => Failure::config(m),
        e => e.into(),
    })?;
    write(&out.join("sweep.csv"), sweep_csv(param, &rows))
}
