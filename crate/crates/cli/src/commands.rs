//! Subcommand bodies. Each writes its files into `out` and returns their names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tsc_core::baselines::{evaluate_fixed_time, fixed_time_episode, ippo_trainer};
use tsc_core::env::TrafficEnv;
use tsc_core::forecast::{forecast_all, ingest_csv_path, synthetic_dataset};
use tsc_core::marl::{
    evaluate_policy, evaluation_seed, training_seed, write_curve_csv, Checkpoint, CriticMode, CurveRow, EpisodeSummary, InfluenceModule,
    PretrainReport, Trainer,
};
use tsc_core::trafficsim::{load_network, TrafficGraph, NUM_STAGES};

use crate::config::RunConfig;
use crate::failure::{Failure, PathContext};
use crate::manifest::Invocation;
use crate::plot;

pub const METHODS: [&str; 3] = ["ours", "ippo", "fixed"];

/// Files written (relative to the output directory), files read and phase timings.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub outputs: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub durations_s: BTreeMap<String, f64>,
}

impl RunRecord {
    fn write(&mut self, out: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = out.join(name);
        std::fs::write(&path, bytes).at(&path)?;
        self.outputs.push(name.to_owned());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, out: &Path, name: &str, value: &T) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(1, e.to_string()))?;
        self.write(out, name, (text + "\n").as_bytes())
    }

    fn time(&mut self, phase: &str, start: Instant) {
        self.durations_s.insert(phase.to_owned(), start.elapsed().as_secs_f64());
    }
}

/// What `pretrain` leaves behind: the fitted `W` + EHH module and its quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainCheckpoint {
    pub network: String,
    pub report: PretrainReport,
    pub influence: InfluenceModule,
}

impl PretrainCheckpoint {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        if !path.exists() {
            return Err(Failure::config(format!(
                "no pre-trained EHH checkpoint at {}; run `tscrl pretrain --config <file>` first or set `pretrain_checkpoint`",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: invalid pretrain checkpoint: {e}", path.display())))
    }
}

fn graph(cfg: &RunConfig) -> Result<Arc<TrafficGraph>, Failure> {
    load_network(&cfg.network).map(Arc::new).map_err(|e| Failure::from(e).context(&format!("network `{}`", cfg.network)))
}

fn absolute(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Fills in defaults that depend on the config so that the invocation can be replayed verbatim.
pub fn resolve_invocation(inv: &mut Invocation, cfg: &mut RunConfig) -> Result<(), Failure> {
    match inv.command.as_str() {
        "train" => {
            let method = inv.method.get_or_insert_with(|| "ours".into());
            if !METHODS.contains(&method.as_str()) {
                return Err(Failure::config(format!("unknown method `{method}`, expected one of {}", METHODS.join(", "))));
            }
            if method == "ours" {
                cfg.pretrain_checkpoint = Some(absolute(&cfg.pretrain_path()));
            }
        }
        "eval" => {
            if inv.method.as_deref() == Some("fixed") {
                inv.checkpoint = None;
            } else if let Some(m) = inv.method.as_deref().filter(|m| !METHODS.contains(m)) {
                return Err(Failure::config(format!("unknown method `{m}`, expected one of {}", METHODS.join(", "))));
            } else {
                inv.checkpoint = Some(absolute(&inv.checkpoint.clone().unwrap_or_else(|| cfg.out.join("checkpoint.json"))));
            }
            inv.episodes.get_or_insert(cfg.eval_episodes);
        }
        "anova" => {
            cfg.pretrain_checkpoint = Some(absolute(&cfg.pretrain_path()));
        }
        "forecast" => {
            if let Some(p) = &cfg.forecast.data {
                cfg.forecast.data = Some(absolute(p));
            }
        }
        "plot" => {
            if inv.files.is_empty() {
                return Err(Failure::config("plot needs at least one curve CSV"));
            }
            inv.files = inv.files.iter().map(|p| absolute(p)).collect();
        }
        _ => {}
    }
    Ok(())
}

pub fn run(inv: &Invocation, cfg: &RunConfig, out: &Path) -> Result<RunRecord, Failure> {
    std::fs::create_dir_all(out).at(out)?;
    match inv.command.as_str() {
        "pretrain" => pretrain(cfg, out),
        "train" => train(cfg, inv.method.as_deref().unwrap_or("ours"), out),
        "eval" => eval(cfg, inv.checkpoint.as_deref(), inv.episodes.unwrap_or(cfg.eval_episodes), out),
        "forecast" => forecast(cfg, out),
        "anova" => anova(cfg, out),
        "plot" => plot_curves(&inv.files, out),
        other => Err(Failure::config(format!("unknown command `{other}`"))),
    }
}

fn pretrain(cfg: &RunConfig, out: &Path) -> Result<RunRecord, Failure> {
    let mut rec = RunRecord::default();
    let start = Instant::now();
    let mut trainer = Trainer::new(graph(cfg)?, cfg.env, cfg.trainer, CriticMode::Influence)?;
    let report = trainer.pretrain()?;
    rec.time("pretrain", start);
    info!("pre-trained on {} steps: train R2 {:.3}, validation R2 {:.3}", report.samples, report.train_r2, report.validation_r2);
    let ck = PretrainCheckpoint {
        network: cfg.network.clone(),
        report: report.clone(),
        influence: trainer.influence().expect("set by pretrain").clone(),
    };
    rec.write(out, "pretrain.json", serde_json::to_string(&ck).map_err(|e| Failure::new(1, e.to_string()))?.as_bytes())?;
    rec.write_json(out, "pretrain_report.json", &report)?;
    Ok(rec)
}

fn write_curve(rec: &mut RunRecord, out: &Path, rows: &[CurveRow]) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_curve_csv(rows, &mut buf)?;
    rec.write(out, "curve.csv", &buf)
}

fn train(cfg: &RunConfig, method: &str, out: &Path) -> Result<RunRecord, Failure> {
    let mut rec = RunRecord::default();
    let graph = graph(cfg)?;
    let start = Instant::now();
    if method == "fixed" {
        let mut env = TrafficEnv::new(graph, cfg.env)?;
        let mut rows = Vec::new();
        for episode in 0..cfg.trainer.episodes {
            let ep = fixed_time_episode(&mut env, training_seed(cfg.seed, episode), &cfg.fixed_time)?;
            if let Some(msg) = &ep.trace.aborted {
                return Err(Failure::new(1, format!("episode {episode} aborted: {msg}")));
            }
            let s = EpisodeSummary::from_episode(0, &ep)?;
            rows.push(CurveRow { episode, global_reward: s.global_reward, ave: s.ave, sta: s.sta, actor_loss: 0.0, critic_loss: 0.0 });
        }
        rec.time("episodes", start);
        write_curve(&mut rec, out, &rows)?;
        rec.write_json(out, "fixed_time.json", &cfg.fixed_time)?;
        return Ok(rec);
    }

    let mut trainer = if method == "ours" {
        let path = cfg.pretrain_path();
        let ck = PretrainCheckpoint::load(&path)?;
        rec.inputs.push(absolute(&path));
        let mut t = Trainer::new(graph, cfg.env, cfg.trainer, CriticMode::Influence)?;
        t.set_influence(ck.influence).map_err(|e| Failure::from(e).context(&path.display().to_string()))?;
        t
    } else {
        ippo_trainer(graph, cfg.env, cfg.trainer)?
    };
    for _ in 0..cfg.trainer.episodes {
        trainer.train_episode()?;
    }
    rec.time("train", start);
    write_curve(&mut rec, out, trainer.curve())?;
    rec.write(out, "checkpoint.json", trainer.checkpoint().to_json()?.as_bytes())?;
    Ok(rec)
}

#[derive(Debug, Serialize)]
struct EvalReport {
    method: String,
    episodes: Vec<EpisodeSummary>,
    #[serde(rename = "AVE")]
    ave: f64,
    #[serde(rename = "STA")]
    sta: f64,
    /// Variance of per-episode AVE across seeds.
    ave_variance: f64,
    global_reward: f64,
}

fn mean(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count().max(1) as f64;
    v.sum::<f64>() / n
}

fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, episodes: usize, out: &Path) -> Result<RunRecord, Failure> {
    let mut rec = RunRecord::default();
    let graph = graph(cfg)?;
    let seeds: Vec<u64> = (0..episodes as u64).map(evaluation_seed).collect();
    let start = Instant::now();
    let (method, runs) = match checkpoint {
        None => ("fixed".to_owned(), evaluate_fixed_time(&graph, &cfg.env, &cfg.fixed_time, &seeds)?),
        Some(path) => {
            let text = std::fs::read_to_string(path).at(path)?;
            let ck = Checkpoint::from_json(&text).map_err(|e| Failure::data(format!("{}: invalid checkpoint: {e}", path.display())))?;
            ck.policy.check_network(&graph).map_err(|e| Failure::from(e).context(&path.display().to_string()))?;
            rec.inputs.push(path.to_path_buf());
            let method = match ck.mode {
                CriticMode::Influence => "ours",
                CriticMode::Independent => "ippo",
            };
            (method.to_owned(), evaluate_policy(&graph, &cfg.env, &ck.policy, &seeds)?)
        }
    };
    rec.time("eval", start);
    let summaries: Vec<EpisodeSummary> = runs.into_iter().map(|(s, _)| s).collect();
    let ave = mean(summaries.iter().map(|s| s.ave));
    let report = EvalReport {
        method,
        ave,
        sta: mean(summaries.iter().map(|s| s.sta)),
        ave_variance: mean(summaries.iter().map(|s| (s.ave - ave).powi(2))),
        global_reward: mean(summaries.iter().map(|s| s.global_reward)),
        episodes: summaries,
    };
    info!("{}: AVE {:.3}  STA {:.3}  reward {:.1}", report.method, report.ave, report.sta, report.global_reward);
    rec.write_json(out, "eval.json", &report)?;
    Ok(rec)
}

fn forecast(cfg: &RunConfig, out: &Path) -> Result<RunRecord, Failure> {
    let mut rec = RunRecord::default();
    let ds = match &cfg.forecast.data {
        Some(path) => {
            rec.inputs.push(path.clone());
            ingest_csv_path(path).at(path)?
        }
        None => synthetic_dataset(&cfg.forecast.synthetic)?,
    };
    let start = Instant::now();
    let results = forecast_all(&ds, &cfg.forecast.model)?;
    rec.time("forecast", start);
    let mut metrics = Vec::new();
    for r in &results {
        info!(
            "h={}: MAE {:.3}  RMSE {:.3}  R2 {:.3}  (persistence RMSE {:.3})",
            r.horizon, r.test.mae, r.test.rmse, r.test.r2, r.persistence.rmse
        );
        metrics.push(r.metrics_json());
        let mut buf = Vec::new();
        r.write_sigma_csv(&mut buf)?;
        rec.write(out, &format!("sigma_h{}.csv", r.horizon), &buf)?;
    }
    rec.write_json(out, "metrics.json", &metrics)?;
    Ok(rec)
}

const OBS_FEATURES: [&str; 3] = ["stage", "queue", "density"];

/// Names of the concatenated observation components.
fn observation_names(agents: usize, pad: usize) -> Vec<String> {
    let mut names = Vec::new();
    for a in 0..agents {
        names.extend((0..NUM_STAGES).map(|s| format!("a{a}_{}{s}", OBS_FEATURES[0])));
        names.extend((0..pad).map(|e| format!("a{a}_{}{e}", OBS_FEATURES[1])));
        names.extend((0..pad).map(|e| format!("a{a}_{}{e}", OBS_FEATURES[2])));
    }
    names
}

fn anova(cfg: &RunConfig, out: &Path) -> Result<RunRecord, Failure> {
    let mut rec = RunRecord::default();
    let path = cfg.pretrain_path();
    let ck = PretrainCheckpoint::load(&path)?;
    rec.inputs.push(path.clone());
    let graph = graph(cfg)?;
    let mut env = TrafficEnv::new(Arc::clone(&graph), cfg.env)?;
    if env.num_agents() != ck.influence.n_agents || env.obs_width() != ck.influence.obs_width {
        return Err(Failure::new(
            1,
            format!(
                "{}: EHH module covers {} agents x {} features, network `{}` has {} x {}",
                path.display(),
                ck.influence.n_agents,
                ck.influence.obs_width,
                cfg.network,
                env.num_agents(),
                env.obs_width()
            ),
        ));
    }

    // random-policy samples, as during pre-training
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ep = env.run_episode(evaluation_seed(0), |_, obs| Ok((0..obs.len()).map(|_| rng.random_range(0..NUM_STAGES)).collect()))?;
    let batch: Vec<Vec<Vec<f64>>> = ep.transitions.iter().map(|t| t.obs.clone()).collect();
    let xs: Vec<Vec<f64>> = batch.iter().map(|o| o.concat()).collect();
    let (report, inverse) = ck.influence.model.importance(&xs)?;
    let weights = ck.influence.weights(&batch)?;
    rec.time("anova", start);

    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    rec.write(out, "anova.csv", &buf)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let names = observation_names(env.num_agents(), graph.max_in_degree());
    w.write_record(["component", "sigma"]).map_err(|e| Failure::new(1, e.to_string()))?;
    for (name, s) in names.iter().zip(&inverse.sigma_in) {
        w.write_record([name.as_str(), &s.to_string()]).map_err(|e| Failure::new(1, e.to_string()))?;
    }
    rec.write(out, "sigma_inputs.csv", &w.into_inner().map_err(|e| Failure::new(1, e.to_string()))?)?;

    let ids: Vec<&str> = (0..env.num_agents()).map(|i| graph.intersection_id(i)).collect();
    let influence: BTreeMap<&str, f64> = ids.iter().copied().zip(weights.iter().copied()).collect();
    rec.write_json(out, "influence.json", &serde_json::json!({ "samples": xs.len(), "clamped": inverse.clamped, "weights": influence }))?;
    Ok(rec)
}

fn plot_curves(files: &[PathBuf], out: &Path) -> Result<RunRecord, Failure> {
    let mut rec = RunRecord::default();
    let curves = files.iter().map(|p| plot::read_curve(p)).collect::<Result<Vec<_>, _>>()?;
    rec.inputs.extend(files.iter().cloned());
    for (file, column, label) in plot::FIGURES {
        rec.write(out, file, plot::line_chart(&curves, column, label).as_bytes())?;
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_names_follow_layout() {
        let n = observation_names(2, 3);
        assert_eq!(n.len(), 2 * (4 + 6));
        assert_eq!(n[4], "a0_queue0");
        assert_eq!(n[10], "a1_stage0");
    }

    #[test]
    fn missing_pretrain_checkpoint_is_actionable() {
        let err = PretrainCheckpoint::load(Path::new("/nonexistent/pretrain.json")).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("tscrl pretrain"));
    }
}
