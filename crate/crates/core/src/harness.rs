//! Simulation driver: the per-round renewal loop, metrics and file output.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::action::{Choice, Selection};
use crate::baselines::baseline_select;
use crate::central::centralized_select;
use crate::config::{dbm_to_watts, Method, SimConfig};
use crate::error::{Error, Result};
use crate::lyap::{constraint_residuals, Residuals, RoundRecord, SelectionHistory, VirtualQueues};
use crate::matching::distributed_select;
use crate::net::{
    derive_neighbor_sets, init_topology, sample_channels, sample_round_state, step_mobility, trust_heterogeneity,
    NetworkState, TrustMatrix,
};
use crate::round::RoundContext;

/// One selected participant and what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub rc: usize,
    pub choice: Choice,
    pub trust: f64,
    pub wset: f64,
    pub epoch_time: f64,
    pub epoch_energy: f64,
    pub upload_time: f64,
    pub upload_energy: f64,
}

/// Per-round metrics. The leading fields form the CSV row; the rest stay in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub method: String,
    #[serde(rename = "V")]
    pub v: f64,
    pub objective: f64,
    pub max_wset: f64,
    pub time_avg_cost: f64,
    pub theta: f64,
    pub mean_queue_gamma: f64,
    pub mean_queue_z: f64,
    pub selected_count: usize,
    pub mean_selected_trust: f64,

    /// Renewal instant at which this round started.
    #[serde(skip)]
    pub tau: f64,
    /// Wall-clock duration of the round: slowest participant's epoch time.
    #[serde(skip)]
    pub duration: f64,
    #[serde(skip)]
    pub participants: Vec<ParticipantRecord>,
    /// Queue values the selector saw.
    #[serde(skip)]
    pub gamma: Vec<f64>,
    #[serde(skip)]
    pub z: Vec<f64>,
    #[serde(skip)]
    pub noop: bool,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl RoundMetrics {
    pub fn mean_upload_time(&self) -> Option<f64> {
        mean_of(self.participants.iter().map(|p| p.upload_time))
    }

    pub fn mean_upload_energy(&self) -> Option<f64> {
        mean_of(self.participants.iter().map(|p| p.upload_energy))
    }
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: SimConfig,
    pub rounds: usize,
    pub final_time_avg_cost: f64,
    pub mean_objective: f64,
    pub mean_theta: f64,
    pub mean_selected_trust: f64,
    pub mean_upload_time: Option<f64>,
    pub mean_upload_energy: Option<f64>,
    /// Trust heterogeneity over the trusted sets (RCs without trusted UnRCs skipped).
    pub l_trust: Option<f64>,
    pub fairness_residuals: Vec<f64>,
    pub qos_residuals: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub config: SimConfig,
    pub metrics: Vec<RoundMetrics>,
    pub history: SelectionHistory,
    pub queues: VirtualQueues,
    pub l_trust: Option<f64>,
}

impl SimulationRun {
    pub fn residuals(&self) -> Result<Residuals> {
        constraint_residuals(&self.history, self.config.delta(), self.config.lyap.r_min_c2c)
    }

    pub fn final_time_avg_cost(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.time_avg_cost)
    }

    /// Mean trust of recommended UnRCs over every referral of the run.
    pub fn mean_selected_trust(&self) -> f64 {
        mean_of(
            self.metrics
                .iter()
                .flat_map(|m| m.participants.iter())
                .filter(|p| matches!(p.choice, Choice::Refer(_)))
                .map(|p| p.trust),
        )
        .unwrap_or(0.0)
    }

    pub fn summary(&self) -> Result<Summary> {
        let residuals = self.residuals()?;
        let n = self.metrics.len() as f64;
        let all = || self.metrics.iter().flat_map(|m| m.participants.iter());
        Ok(Summary {
            config: self.config.clone(),
            rounds: self.metrics.len(),
            final_time_avg_cost: self.final_time_avg_cost(),
            mean_objective: self.metrics.iter().map(|m| m.objective).sum::<f64>() / n,
            mean_theta: self.metrics.iter().map(|m| m.theta).sum::<f64>() / n,
            mean_selected_trust: self.mean_selected_trust(),
            mean_upload_time: mean_of(all().map(|p| p.upload_time)),
            mean_upload_energy: mean_of(all().map(|p| p.upload_energy)),
            l_trust: self.l_trust,
            fairness_residuals: residuals.fairness,
            qos_residuals: residuals.qos,
        })
    }
}

/// Runs the configured selector on one network snapshot.
pub fn select(config: &SimConfig, ctx: &RoundContext<'_>, queues: &VirtualQueues) -> Result<Selection> {
    let v = config.lyap.v;
    match config.method {
        Method::Centralized => centralized_select(ctx, queues, v, &config.sghs, config.enumeration_cap, config.seed),
        Method::Matching => {
            distributed_select(ctx, queues, v, &config.sghs, &config.matching, config.seed).map(|o| o.selection)
        }
        Method::Baseline(kind) => baseline_select(kind, ctx, queues, v, &config.sghs, config.seed),
    }
}

fn participant_records(ctx: &RoundContext<'_>, sel: &Selection) -> Result<Vec<ParticipantRecord>> {
    sel.policy
        .participants()
        .map(|(m, choice)| {
            let cost = ctx.candidate(m, choice).ok_or(Error::InfeasibleLink)?;
            let (epoch_time, epoch_energy) = cost.breakdown.epoch(sel.theta)?;
            Ok(ParticipantRecord {
                rc: m,
                choice,
                trust: cost.trust,
                wset: cost.breakdown.wset(sel.theta, ctx.weights)?,
                epoch_time,
                epoch_energy,
                upload_time: cost.breakdown.t_com,
                upload_energy: cost.breakdown.e_com,
            })
        })
        .collect()
}

/// Advances the network to `round`: one mobility step, fresh channels and round state.
pub fn advance(state: &mut NetworkState, config: &SimConfig, round: usize) {
    state.round = round;
    step_mobility(state, &config.mobility, config.area_radius, config.seed);
    sample_channels(state, config, config.seed);
    sample_round_state(state, config, config.seed);
}

pub fn run_simulation(config: &SimConfig) -> Result<SimulationRun> {
    let mut state = init_topology(config, config.seed)?;
    let sets = derive_neighbor_sets(&state, config.sensing_radius);
    let rows: Vec<usize> = (0..config.num_rc).filter(|&m| !sets.trusted[m].is_empty()).collect();
    let l_trust = if rows.is_empty() {
        None
    } else {
        let sub = TrustMatrix::from_rows(rows.iter().map(|&m| state.trust.row(m).to_vec()).collect())?;
        let cols: Vec<Vec<usize>> = rows.iter().map(|&m| sets.trusted[m].clone()).collect();
        trust_heterogeneity(&sub, &cols).ok()
    };

    let mut queues = VirtualQueues::new(config.num_rc, config.num_unrc);
    let mut history = SelectionHistory::new();
    let mut metrics = Vec::with_capacity(config.horizon);
    let (mut tau, mut cost_sum) = (0.0, 0.0);

    for t in 1..=config.horizon {
        let started = Instant::now();
        advance(&mut state, config, t);
        let wrap = |e: Error| Error::Round { round: t, source: Box::new(e) };
        let ctx = RoundContext::new(&state, config).map_err(wrap)?;
        let sel = select(config, &ctx, &queues).map_err(wrap)?;
        let participants = participant_records(&ctx, &sel).map_err(wrap)?;

        let max_wset = participants.iter().map(|p| p.wset).fold(0.0, f64::max);
        let duration = if participants.is_empty() {
            config.t_max_cmp
        } else {
            participants.iter().map(|p| p.epoch_time).fold(0.0, f64::max)
        };
        cost_sum += max_wset;
        let referred: Vec<f64> =
            participants.iter().filter(|p| matches!(p.choice, Choice::Refer(_))).map(|p| p.trust).collect();

        metrics.push(RoundMetrics {
            round: t,
            method: config.method.name().to_string(),
            v: config.lyap.v,
            objective: sel.objective,
            max_wset,
            time_avg_cost: cost_sum / t as f64,
            theta: sel.theta,
            mean_queue_gamma: queues.mean_gamma(),
            mean_queue_z: queues.mean_z(),
            selected_count: participants.len(),
            mean_selected_trust: mean_of(referred.into_iter()).unwrap_or(0.0),
            tau,
            duration,
            participants,
            gamma: queues.gamma.clone(),
            z: queues.z.clone(),
            noop: sel.noop,
            wall_time_secs: started.elapsed().as_secs_f64(),
        });
        tau += duration;

        history.push(RoundRecord::from_policy(&ctx, &sel.policy));
        queues.update(&ctx, &sel.policy);
    }

    Ok(SimulationRun { config: config.clone(), metrics, history, queues, l_trust })
}

pub fn write_metrics_csv(metrics: &[RoundMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<RoundMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes `metrics.csv` and `summary.json` into `out_dir`.
pub fn write_outputs(run: &SimulationRun, out_dir: &Path) -> Result<()> {
    if run.metrics.is_empty() {
        return Err(Error::EmptyMetrics);
    }
    fs::create_dir_all(out_dir)?;
    write_metrics_csv(&run.metrics, &out_dir.join("metrics.csv"))?;
    let summary = run.summary()?;
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    /// Lyapunov balance `V`.
    V,
    /// Mean local dataset size.
    Q,
    /// UnRC power budget, in dBm.
    PUrc,
    /// Lower end of the trust weight range.
    LTrust,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::V => "v",
            SweepParam::Q => "q",
            SweepParam::PUrc => "p-urc",
            SweepParam::LTrust => "l-trust",
        }
    }

    pub fn apply(&self, config: &mut SimConfig, value: f64) {
        match self {
            SweepParam::V => config.lyap.v = value,
            SweepParam::Q => config.q_mean = value,
            SweepParam::PUrc => config.p_urc_max = dbm_to_watts(value),
            SweepParam::LTrust => config.trust_floor = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::V, SweepParam::Q, SweepParam::PUrc, SweepParam::LTrust]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep parameter `{s}`")))
    }
}

/// Aggregate row of one `(value, seed)` sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub method: String,
    pub time_avg_cost: f64,
    pub mean_selected_trust: f64,
    pub mean_upload_time: Option<f64>,
    pub mean_upload_energy: Option<f64>,
    pub l_trust: Option<f64>,
    pub metrics_file: String,
}

/// Runs every `(value, seed)` cell; seeds are `base.seed .. base.seed + seeds`.
/// With `out_dir` set, writes one metrics CSV per cell plus `aggregate.csv`.
pub fn sweep(
    base: &SimConfig,
    param: SweepParam,
    values: &[f64],
    seeds: u64,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepCell>> {
    let cells: Vec<(f64, u64)> = values.iter().flat_map(|&v| (0..seeds).map(move |k| (v, base.seed + k))).collect();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let run_cell = |&(value, seed): &(f64, u64)| -> Result<SweepCell> {
        let mut config = base.clone();
        param.apply(&mut config, value);
        config.seed = seed;
        config.validate()?;
        let run = run_simulation(&config)?;
        let file = format!("{}-{}-seed{}.csv", param.name(), value, seed);
        if let Some(dir) = out_dir {
            write_metrics_csv(&run.metrics, &dir.join(&file))?;
        }
        let summary = run.summary()?;
        Ok(SweepCell {
            param: param.name().to_string(),
            value,
            seed,
            method: config.method.name().to_string(),
            time_avg_cost: summary.final_time_avg_cost,
            mean_selected_trust: summary.mean_selected_trust,
            mean_upload_time: summary.mean_upload_time,
            mean_upload_energy: summary.mean_upload_energy,
            l_trust: summary.l_trust,
            metrics_file: file,
        })
    };

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len().max(1));
    let mut results: Vec<Option<Result<SweepCell>>> = (0..cells.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results.chunks_mut(cells.len().div_ceil(workers).max(1)).collect();
        let mut start = 0;
        for chunk in chunks {
            let range = start..start + chunk.len();
            start += chunk.len();
            let cells = &cells[range];
            let run_cell = &run_cell;
            scope.spawn(move || {
                for (slot, cell) in chunk.iter_mut().zip(cells) {
                    *slot = Some(run_cell(cell));
                }
            });
        }
    });
    let out: Vec<SweepCell> = results.into_iter().map(|r| r.expect("every cell ran")).collect::<Result<_>>()?;

    if let Some(dir) = out_dir {
        let mut w = csv::Writer::from_path(dir.join("aggregate.csv"))?;
        for cell in &out {
            w.serialize(cell)?;
        }
        w.flush()?;
    }
    Ok(out)
}

/// Default location of a run's outputs.
pub fn default_out_dir(config: &SimConfig) -> PathBuf {
    PathBuf::from(format!("out/{}-seed{}", config.method.name(), config.seed))
}
