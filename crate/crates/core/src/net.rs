//! The hierarchical IoT world: client placement, social trust, mobility,
//! channel gains and the per-round random state.
//!
//! Client indices `0..M` are RCs and `M..M+N` are UnRCs. Everywhere an UnRC is
//! addressed on its own (trust columns, activity flags, C2C pairs) it uses its
//! local index `0..N`.

use std::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub type Point = [f64; 2];

/// Propagation distances below this are clamped (m).
pub const MIN_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientKind {
    Rc,
    UnRc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub id: usize,
    pub kind: ClientKind,
    pub position: Point,
    /// Current speed (m/s).
    pub speed: f64,
    /// Current heading (rad).
    pub direction: f64,
    /// Long-run heading the Gauss-Markov process reverts to (rad).
    pub mean_direction: f64,
    /// Transmit power budget (W).
    pub p_max: f64,
    /// CPU frequency (cycles/s).
    pub f: f64,
    /// Effective switched capacitance.
    pub rho: f64,
    /// Processing density (cycles/sample).
    pub b: f64,
    /// Local model update size (bit).
    pub model_size: f64,
}

impl Client {
    pub fn velocity(&self) -> Point {
        [self.speed * self.direction.cos(), self.speed * self.direction.sin()]
    }
}

/// Trust values `w[m][n]` between RCs (rows) and UnRCs (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustMatrix {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
}

impl TrustMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, w: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("ragged trust matrix".into()));
        }
        if rows.iter().flatten().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidConfig("trust values must lie in [0, 1]".into()));
        }
        Ok(Self { rows: rows.len(), cols, w: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.w[m * self.cols + n]
    }

    pub fn set(&mut self, m: usize, n: usize, value: f64) {
        self.w[m * self.cols + n] = value;
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.w[m * self.cols..(m + 1) * self.cols]
    }

    /// Sum of trust over the RC's trusted set.
    pub fn row_sum(&self, m: usize) -> f64 {
        self.row(m).iter().sum()
    }

    /// True when every UnRC is trusted by at least one RC.
    pub fn covers_all_columns(&self) -> bool {
        (0..self.cols).all(|n| (0..self.rows).any(|m| self.get(m, n) > 0.0))
    }
}

/// Full per-round snapshot of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub round: usize,
    pub num_rc: usize,
    pub num_unrc: usize,
    pub clients: Vec<Client>,
    pub trust: TrustMatrix,
    /// Uplink power gain of each client to the server (linear).
    pub uplink_gain: Vec<f64>,
    /// Symmetric UnRC-to-UnRC gains, row-major `N x N` (linear).
    pub c2c_gain: Vec<f64>,
    /// Training samples held by each client this round.
    pub samples: Vec<f64>,
    /// `true` when the RC has spare resources (member of the idle set).
    pub idle: Vec<bool>,
    /// `true` when the UnRC has its own QoS need this round.
    pub active: Vec<bool>,
    /// C2C partner of each UnRC, if paired this round.
    pub c2c_partner: Vec<Option<usize>>,
}

impl NetworkState {
    pub fn rc(&self, m: usize) -> &Client {
        &self.clients[m]
    }

    pub fn unrc(&self, n: usize) -> &Client {
        &self.clients[self.num_rc + n]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        distance(self.clients[a].position, self.clients[b].position)
    }

    /// Distance between RC `m` and UnRC `n`.
    pub fn rc_unrc_distance(&self, m: usize, n: usize) -> f64 {
        self.distance(m, self.num_rc + n)
    }

    /// Distance between UnRCs `a` and `b`.
    pub fn unrc_distance(&self, a: usize, b: usize) -> f64 {
        self.distance(self.num_rc + a, self.num_rc + b)
    }

    pub fn c2c_gain_between(&self, a: usize, b: usize) -> f64 {
        self.c2c_gain[a * self.num_unrc + b]
    }

    /// Unordered list of C2C pairs `(a, b)` with `a < b`.
    pub fn c2c_pairs(&self) -> Vec<(usize, usize)> {
        self.c2c_partner.iter().enumerate().filter_map(|(a, p)| p.filter(|&b| a < b).map(|b| (a, b))).collect()
    }
}

/// Per-round candidate sets derived from trust, distance and activity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NeighborSets {
    /// UnRCs with positive trust, per RC.
    pub trusted: Vec<Vec<usize>>,
    /// Trusted UnRCs with a QoS need this round.
    pub trusted_active: Vec<Vec<usize>>,
    /// Trusted UnRCs within the sensing radius.
    pub sensed: Vec<Vec<usize>>,
    /// Sensed UnRCs with a QoS need this round.
    pub sensed_active: Vec<Vec<usize>>,
    /// RCs that sense each UnRC.
    pub reach: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityParams {
    /// Gauss-Markov memory in `[0, 1]`; 1 keeps the velocity fixed.
    pub memory: f64,
    /// Long-run mean speed (m/s).
    pub mean_speed: f64,
    /// Standard deviation of the speed innovation (m/s).
    pub speed_noise_std: f64,
    /// Standard deviation of the heading innovation (rad).
    pub direction_noise_std: f64,
    /// Duration of one mobility step (s).
    pub step_seconds: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self { memory: 0.85, mean_speed: 1.0, speed_noise_std: 0.25, direction_noise_std: 0.5, step_seconds: 1.0 }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.memory) {
            return Err(Error::InvalidConfig("mobility memory must lie in [0, 1]".into()));
        }
        if !(self.mean_speed > 0.0) {
            return Err(Error::InvalidConfig("mobility mean_speed must be positive".into()));
        }
        if !(self.speed_noise_std >= 0.0 && self.direction_noise_std >= 0.0) {
            return Err(Error::InvalidConfig("mobility noise must be non-negative".into()));
        }
        if !(self.step_seconds >= 0.0) {
            return Err(Error::InvalidConfig("mobility step must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean linear power gain at `dist` meters: `ref_db` at 1 m plus `10·exponent·log10(dist)` dB.
pub fn path_gain(dist: f64, ref_db: f64, exponent: f64) -> f64 {
    let d = dist.max(MIN_DISTANCE);
    let loss_db = ref_db + 10.0 * exponent * d.log10();
    10f64.powf(-loss_db / 10.0)
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

fn uniform_in_disc<R: Rng>(rng: &mut R, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(-PI..PI);
    [r * a.cos(), r * a.sin()]
}

fn trust_weight<R: Rng>(rng: &mut R, floor: f64) -> f64 {
    // 1 - U[0,1) lies in (0, 1]; rescale onto (floor, 1].
    1.0 - rng.random::<f64>() * (1.0 - floor)
}

/// Places clients, draws the trust matrix and samples round-0 channels and state.
pub fn init_topology(config: &SimConfig, seed: u64) -> Result<NetworkState> {
    config.validate()?;
    let (m_count, n_count) = (config.num_rc, config.num_unrc);

    let mut place = stream(seed, 0, Purpose::Placement, 0);
    let clients: Vec<Client> = (0..m_count + n_count)
        .map(|id| {
            let kind = if id < m_count { ClientKind::Rc } else { ClientKind::UnRc };
            let position = uniform_in_disc(&mut place, config.area_radius);
            let direction = place.random_range(-PI..PI);
            let (p_max, f) = match kind {
                ClientKind::Rc => (config.p_rc_max, config.f_rc),
                ClientKind::UnRc => (config.p_urc_max, config.f_urc),
            };
            Client {
                id,
                kind,
                position,
                speed: config.mobility.mean_speed,
                direction,
                mean_direction: direction,
                p_max,
                f,
                rho: config.rho,
                b: config.cycles_per_sample,
                model_size: config.model_size_bits,
            }
        })
        .collect();

    let mut trust_rng = stream(seed, 0, Purpose::Trust, 0);
    let mut trust = TrustMatrix::zeros(m_count, n_count);
    for m in 0..m_count {
        for n in 0..n_count {
            if trust_rng.random_bool(config.trust_link_probability) {
                trust.set(m, n, trust_weight(&mut trust_rng, config.trust_floor));
            }
        }
    }
    // Every UnRC must be trusted by someone: link orphans to their nearest RC.
    for n in 0..n_count {
        if (0..m_count).any(|m| trust.get(m, n) > 0.0) {
            continue;
        }
        let upos = clients[m_count + n].position;
        let nearest = (0..m_count)
            .min_by(|&a, &b| distance(clients[a].position, upos).total_cmp(&distance(clients[b].position, upos)))
            .expect("at least one RC");
        trust.set(nearest, n, trust_weight(&mut trust_rng, config.trust_floor));
    }

    let mut state = NetworkState {
        round: 0,
        num_rc: m_count,
        num_unrc: n_count,
        clients,
        trust,
        uplink_gain: Vec::new(),
        c2c_gain: Vec::new(),
        samples: Vec::new(),
        idle: Vec::new(),
        active: Vec::new(),
        c2c_partner: Vec::new(),
    };
    sample_channels(&mut state, config, seed);
    sample_round_state(&mut state, config, seed);
    Ok(state)
}

/// One Gauss-Markov step for every client, reflecting at the disc boundary.
pub fn step_mobility(state: &mut NetworkState, params: &MobilityParams, radius: f64, seed: u64) {
    let mut rng = stream(seed, state.round as u64, Purpose::Mobility, 0);
    let a = params.memory;
    let innovation = (1.0 - a * a).max(0.0).sqrt();
    for client in &mut state.clients {
        let e_speed: f64 = rng.sample(StandardNormal);
        let e_dir: f64 = rng.sample(StandardNormal);
        client.speed =
            (a * client.speed + (1.0 - a) * params.mean_speed + innovation * params.speed_noise_std * e_speed).max(0.0);
        client.direction = wrap_angle(
            client.mean_direction
                + a * wrap_angle(client.direction - client.mean_direction)
                + innovation * params.direction_noise_std * e_dir,
        );

        let v = client.velocity();
        let p = [client.position[0] + v[0] * params.step_seconds, client.position[1] + v[1] * params.step_seconds];
        let r = p[0].hypot(p[1]);
        if r <= radius {
            client.position = p;
            continue;
        }
        // Mirror across the boundary along the radial line, then reflect the
        // heading and its mean about the tangent.
        let normal = [p[0] / r, p[1] / r];
        let inside = (2.0 * radius - r).clamp(-radius, radius);
        client.position = [normal[0] * inside, normal[1] * inside];
        let reflect = |angle: f64| {
            let (s, c) = angle.sin_cos();
            let dot = c * normal[0] + s * normal[1];
            let (x, y) = (c - 2.0 * dot * normal[0], s - 2.0 * dot * normal[1]);
            y.atan2(x)
        };
        client.direction = reflect(client.direction);
        client.mean_direction = reflect(client.mean_direction);
    }
}

/// Draws Rayleigh-faded uplink and C2C gains for the current positions.
pub fn sample_channels(state: &mut NetworkState, config: &SimConfig, seed: u64) {
    let (ref_db, exp) = (config.path_loss_ref_db, config.path_loss_exponent);
    let round = state.round as u64;

    let mut up = stream(seed, round, Purpose::Channel, 0);
    state.uplink_gain = state
        .clients
        .iter()
        .map(|c| {
            let fading: f64 = up.sample(Exp1);
            path_gain(c.position[0].hypot(c.position[1]), ref_db, exp) * fading.max(f64::MIN_POSITIVE)
        })
        .collect();

    let n = state.num_unrc;
    let mut c2c = stream(seed, round, Purpose::Channel, 1);
    let mut gains = vec![0.0; n * n];
    for a in 0..n {
        gains[a * n + a] = path_gain(MIN_DISTANCE, ref_db, exp);
        for b in a + 1..n {
            let fading: f64 = c2c.sample(Exp1);
            let g = path_gain(state.unrc_distance(a, b), ref_db, exp) * fading.max(f64::MIN_POSITIVE);
            gains[a * n + b] = g;
            gains[b * n + a] = g;
        }
    }
    state.c2c_gain = gains;
}

/// Draws per-round data sizes, RC idle status, UnRC QoS needs and C2C pairs.
pub fn sample_round_state(state: &mut NetworkState, config: &SimConfig, seed: u64) {
    let round = state.round as u64;

    let poisson = Poisson::new(config.q_mean).expect("q_mean validated positive");
    let mut q_rng = stream(seed, round, Purpose::DataSize, 0);
    state.samples = (0..state.clients.len()).map(|_| poisson.sample(&mut q_rng)).collect();

    let mut status = stream(seed, round, Purpose::Status, 0);
    state.idle = (0..state.num_rc).map(|_| status.random_bool(config.idle_probability)).collect();

    let mut act = stream(seed, round, Purpose::Activity, 0);
    state.active = (0..state.num_unrc).map(|_| act.random_bool(config.active_probability)).collect();

    let mut pairing = stream(seed, round, Purpose::Pairing, 0);
    let mut partner: Vec<Option<usize>> = vec![None; state.num_unrc];
    let mut order: Vec<usize> = (0..state.num_unrc).filter(|&n| state.active[n]).collect();
    order.shuffle(&mut pairing);
    for a in order {
        if partner[a].is_some() {
            continue;
        }
        let options: Vec<usize> = (0..state.num_unrc)
            .filter(|&b| b != a && partner[b].is_none() && state.unrc_distance(a, b) <= config.c2c_range)
            .collect();
        if let Some(&b) = options.as_slice().choose(&mut pairing) {
            partner[a] = Some(b);
            partner[b] = Some(a);
        }
    }
    state.c2c_partner = partner;
}

/// Builds trusted, sensed and active candidate sets for the current round.
pub fn derive_neighbor_sets(state: &NetworkState, sensing_radius: f64) -> NeighborSets {
    let (m_count, n_count) = (state.num_rc, state.num_unrc);
    let mut sets = NeighborSets {
        trusted: vec![Vec::new(); m_count],
        trusted_active: vec![Vec::new(); m_count],
        sensed: vec![Vec::new(); m_count],
        sensed_active: vec![Vec::new(); m_count],
        reach: vec![Vec::new(); n_count],
    };
    for m in 0..m_count {
        for n in 0..n_count {
            if state.trust.get(m, n) <= 0.0 {
                continue;
            }
            let active = state.active[n];
            sets.trusted[m].push(n);
            if active {
                sets.trusted_active[m].push(n);
            }
            if state.rc_unrc_distance(m, n) <= sensing_radius {
                sets.sensed[m].push(n);
                sets.reach[n].push(m);
                if active {
                    sets.sensed_active[m].push(n);
                }
            }
        }
    }
    sets
}

/// Trust heterogeneity: the smallest row maximum over the largest row minimum,
/// each row restricted to that RC's candidate columns.
pub fn trust_heterogeneity(trust: &TrustMatrix, candidates: &[Vec<usize>]) -> Result<f64> {
    let mut min_of_max = f64::INFINITY;
    let mut max_of_min = f64::NEG_INFINITY;
    for (m, cols) in candidates.iter().enumerate() {
        let values = cols.iter().map(|&n| trust.get(m, n));
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w), hi.max(w)));
        if cols.is_empty() || !(lo > 0.0) {
            return Err(Error::UndefinedHeterogeneity(m));
        }
        min_of_max = min_of_max.min(hi);
        max_of_min = max_of_min.max(lo);
    }
    if candidates.is_empty() {
        return Err(Error::UndefinedHeterogeneity(0));
    }
    Ok(min_of_max / max_of_min)
}

/// Every column of every row: the unrestricted candidate sets.
pub fn full_candidate_sets(trust: &TrustMatrix) -> Vec<Vec<usize>> {
    (0..trust.rows()).map(|_| (0..trust.cols()).collect()).collect()
}
