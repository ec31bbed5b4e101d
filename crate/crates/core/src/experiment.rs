//! End-to-end runs on generated worlds: simulate an observation at every
//! ground-truth pose, localize it, and score the answers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::contrastive::{
    mine_all, retrieval_accuracy, train_linear_embedder, Anchor, MiningDataset, MiningSpec, PerturbSpec,
    SignatureEmbedder, TrainSpec, TrainingExample, TrainingOutcome,
};
use crate::crop::CropSpec;
use crate::disambiguate::{fuse, softmax, DisambigConfig, EmbedderPair, Localizer};
use crate::error::{ensure, Result};
use crate::floorplan::{FanSpec, Pose};
use crate::metrics::{evaluate, EvalRecord, EvalReport};
use crate::pose_scoring::{argmax_pose, CandidateSet, PoseGridSpec, DEFAULT_SIGMA};
use crate::synth::{
    generate_world, simulate_observation, NoiseSpec, OracleEmbedder, OracleEmbedderSpec, World, WorldSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub fan: FanSpec,
    pub grid: PoseGridSpec,
    pub sigma: f64,
    pub crop: CropSpec,
    /// Its fan is replaced by `fan` and its clip distance capped at half the crop side.
    pub oracle: OracleEmbedderSpec,
    pub disambig: DisambigConfig,
    pub noise: NoiseSpec,
    /// Query `i` draws its noise from seed `noise_seed + i`.
    pub noise_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            fan: FanSpec::default(),
            grid: PoseGridSpec::default(),
            sigma: DEFAULT_SIGMA,
            crop: CropSpec::default(),
            oracle: OracleEmbedderSpec::default(),
            disambig: DisambigConfig::default(),
            noise: NoiseSpec::default(),
            noise_seed: 0,
        }
    }
}

impl ExperimentSpec {
    /// The oracle configured for this fan, clipped to fit inside `crop`.
    pub fn oracle_for(&self, crop: &CropSpec) -> OracleEmbedderSpec {
        OracleEmbedderSpec {
            fan: self.fan.clone(),
            clip_m: self.oracle.clip_m.min(crop.side_m / 2.0),
            ..self.oracle.clone()
        }
    }
}

/// What one query produced, kept small enough to re-fuse under other settings.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub gt: Pose,
    pub depth_only: Pose,
    pub candidates: CandidateSet,
    pub similarities: Vec<f64>,
}

impl QueryResult {
    /// Fused choice using the first `x` candidates.
    pub fn select(&self, w: f64, x: usize, temperature: f64) -> Result<Pose> {
        let x = x.min(self.candidates.len());
        ensure!(x >= 1, Validation, "candidate count must be at least 1");
        let prefix = CandidateSet {
            candidates: self.candidates.candidates[..x].to_vec(),
        };
        let dpm = softmax(&self.similarities[..x], temperature)?;
        let (best, _) = fuse(&prefix, &dpm, w)?;
        Ok(prefix.candidates[best].pose)
    }
}

/// Run every ground-truth pose of `world` through the full pipeline.
pub fn run_queries(world: &World, spec: &ExperimentSpec) -> Result<Vec<QueryResult>> {
    let localizer = Localizer::new(&world.map, &spec.grid, &spec.fan, spec.sigma, spec.crop)?;
    run_queries_with(&localizer, world, spec)
}

/// Like [`run_queries`] with a prebuilt localizer (its crop spec is used as is).
pub fn run_queries_with(localizer: &Localizer<'_>, world: &World, spec: &ExperimentSpec) -> Result<Vec<QueryResult>> {
    spec.disambig.validate()?;
    let oracle = OracleEmbedder::new(spec.oracle_for(&spec.crop))?;
    let pair = EmbedderPair {
        visual: &oracle,
        geometry: &oracle,
    };
    world
        .gt_poses
        .iter()
        .enumerate()
        .map(|(i, gt)| {
            let obs = simulate_observation(&world.map, gt, &spec.fan, &spec.noise, spec.noise_seed.wrapping_add(i as u64))?;
            let loc = localizer.localize(&obs.predicted, &obs.signature, pair, &spec.disambig)?;
            Ok(QueryResult {
                gt: *gt,
                depth_only: argmax_pose(&loc.dafpm)?,
                candidates: loc.candidates,
                similarities: loc.similarities,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Fraction of answers in the same room as the ground truth.
    pub room_accuracy: f64,
    pub report: EvalReport,
}

pub fn summarize(world: &World, pairs: &[(Pose, Pose)]) -> Result<Summary> {
    let records: Vec<EvalRecord> = pairs.iter().map(|&(pred, gt)| EvalRecord::new(pred, gt)).collect();
    let report = evaluate(&records)?;
    let same = pairs
        .iter()
        .filter(|(pred, gt)| world.room_at(pred.x, pred.y) == world.room_at(gt.x, gt.y))
        .count();
    Ok(Summary {
        room_accuracy: same as f64 / pairs.len() as f64,
        report,
    })
}

/// Score the fused answers of `results` under one setting.
pub fn summarize_fused(world: &World, results: &[QueryResult], w: f64, x: usize, temperature: f64) -> Result<Summary> {
    let pairs = results
        .iter()
        .map(|r| Ok((r.select(w, x, temperature)?, r.gt)))
        .collect::<Result<Vec<_>>>()?;
    summarize(world, &pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    W,
    X,
    CropM,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::W => "w",
            SweepParam::X => "x",
            SweepParam::CropM => "crop_m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Summary,
}

/// Evaluate the benchmark once per value of `param`, holding the rest of `spec` fixed.
pub fn sweep(world: &World, spec: &ExperimentSpec, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    ensure!(!values.is_empty(), Validation, "sweep needs at least one value");
    let d = spec.disambig;
    match param {
        SweepParam::W => {
            ensure!(
                values.iter().all(|w| (0.0..=1.0).contains(w)),
                Validation,
                "w values must lie in [0, 1]"
            );
            let results = run_queries(world, spec)?;
            values
                .iter()
                .map(|&w| {
                    Ok(SweepRow {
                        value: w,
                        summary: summarize_fused(world, &results, w, d.x, d.softmax_temperature)?,
                    })
                })
                .collect()
        }
        SweepParam::X => {
            ensure!(
                values.iter().all(|&x| x >= 1.0 && x.fract() == 0.0),
                Validation,
                "x values must be positive integers"
            );
            // candidate lists are nested, so one run at the largest X serves all
            let x_max = values.iter().copied().fold(0.0, f64::max) as usize;
            let wide = ExperimentSpec {
                disambig: DisambigConfig { x: x_max, ..d },
                ..spec.clone()
            };
            let results = run_queries(world, &wide)?;
            values
                .iter()
                .map(|&x| {
                    Ok(SweepRow {
                        value: x,
                        summary: summarize_fused(world, &results, d.w, x as usize, d.softmax_temperature)?,
                    })
                })
                .collect()
        }
        SweepParam::CropM => {
            let mut localizer = Localizer::new(&world.map, &spec.grid, &spec.fan, spec.sigma, spec.crop)?;
            values
                .iter()
                .map(|&side| {
                    let crop = CropSpec { side_m: side, ..spec.crop };
                    localizer.set_crop(crop);
                    let s = ExperimentSpec { crop, ..spec.clone() };
                    let results = run_queries_with(&localizer, world, &s)?;
                    Ok(SweepRow {
                        value: side,
                        summary: summarize_fused(world, &results, d.w, d.x, d.softmax_temperature)?,
                    })
                })
                .collect()
        }
    }
}

/// Sweep rows as CSV with fixed-precision numbers.
pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut s = format!("{},room_acc,recall_0.1m,recall_0.5m,recall_1m,recall_1m_30deg,n\n", param.name());
    for r in rows {
        let e = &r.summary.report;
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.value, r.summary.room_accuracy, e.recall_0_1m, e.recall_0_5m, e.recall_1m, e.recall_1m_30deg, e.n
        );
    }
    s
}

/// Training the geometry-side linear embedder against the oracle's visual side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderStudySpec {
    /// Worlds are generated with seeds `world.seed`, `world.seed + 1`, ...
    pub n_worlds: usize,
    /// The last `holdout` anchors are kept out of training.
    pub holdout: usize,
    pub retrieval_candidates: usize,
    pub perturb: PerturbSpec,
    pub mining: MiningSpec,
    pub train: TrainSpec,
}

impl Default for EmbedderStudySpec {
    fn default() -> Self {
        Self {
            n_worlds: 4,
            holdout: 128,
            retrieval_candidates: 32,
            perturb: PerturbSpec::default(),
            mining: MiningSpec::default(),
            train: TrainSpec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbedderStudy {
    pub outcome: TrainingOutcome,
    pub n_train: usize,
    pub n_holdout: usize,
    pub train_retrieval: f64,
    pub holdout_retrieval: f64,
}

/// `n` worlds from `world` with consecutive seeds.
pub fn study_worlds(world: &WorldSpec, n: usize) -> Result<Vec<World>> {
    ensure!(n >= 1, Config, "the study needs at least one world");
    (0..n as u64)
        .map(|k| {
            generate_world(&WorldSpec {
                seed: world.seed.wrapping_add(k),
                ..world.clone()
            })
        })
        .collect()
}

/// Every ground-truth pose of `worlds` as a mining anchor.
pub fn mining_dataset(worlds: Vec<World>) -> MiningDataset {
    let anchors = worlds
        .iter()
        .enumerate()
        .flat_map(|(m, w)| w.gt_poses.iter().map(move |&pose| Anchor { map: m, pose }))
        .collect();
    MiningDataset {
        maps: worlds.into_iter().map(|w| w.map).collect(),
        anchors,
    }
}

/// Mine crops around every ground-truth pose of `n_worlds` generated worlds and
/// pair each with the oracle's noiseless signature embedding.
pub fn training_examples(
    world: &WorldSpec,
    spec: &ExperimentSpec,
    study: &EmbedderStudySpec,
) -> Result<Vec<TrainingExample>> {
    let worlds = study_worlds(world, study.n_worlds)?;
    let oracle = OracleEmbedder::new(OracleEmbedderSpec {
        dim: study.train.dim,
        ..spec.oracle_for(&spec.crop)
    })?;
    let data = mining_dataset(worlds);
    let queries = data
        .anchors
        .iter()
        .map(|a| {
            let obs = simulate_observation(&data.maps[a.map], &a.pose, &spec.fan, &NoiseSpec::default(), 0)?;
            oracle.embed_signature(&obs.signature)
        })
        .collect::<Result<Vec<_>>>()?;
    let mined = mine_all(&data, &study.perturb, &study.mining, &spec.crop)?;
    Ok(queries
        .into_iter()
        .zip(mined)
        .map(|(anchor, mined)| TrainingExample { anchor, mined })
        .collect())
}

/// Train on all but the last `holdout` examples and report retrieval on both parts.
pub fn embedder_study(world: &WorldSpec, spec: &ExperimentSpec, study: &EmbedderStudySpec) -> Result<EmbedderStudy> {
    let examples = training_examples(world, spec, study)?;
    ensure!(
        study.holdout >= 1 && study.holdout < examples.len(),
        Config,
        "holdout must leave examples on both sides, got {} of {}",
        study.holdout,
        examples.len()
    );
    let (train, held) = examples.split_at(examples.len() - study.holdout);
    let outcome = train_linear_embedder(train, &study.train)?;
    let n = study.retrieval_candidates;
    Ok(EmbedderStudy {
        train_retrieval: retrieval_accuracy(&outcome.embedder, train, n)?,
        holdout_retrieval: retrieval_accuracy(&outcome.embedder, held, n)?,
        n_train: train.len(),
        n_holdout: held.len(),
        outcome,
    })
}
