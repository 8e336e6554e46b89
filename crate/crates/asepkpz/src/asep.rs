//! Continuous-time simulation of open ASEP, its height function and the SOS picture.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub const MAX_GENERATOR_SITES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lattice {
    Interval(usize),
    HalfLineTruncated(usize),
}

impl Lattice {
    pub fn n(&self) -> usize {
        match *self {
            Lattice::Interval(n) | Lattice::HalfLineTruncated(n) => n,
        }
    }

    pub fn has_right_reservoir(&self) -> bool {
        matches!(self, Lattice::Interval(_))
    }

    /// Truncation length for a half-line window `[0, x_max]` observed up to time `t`.
    pub fn half_line_for(x_max: usize, t: f64, delta: f64) -> Self {
        let reach = 4.0 * t.max(1.0).sqrt() * (1.0 / delta).ln().max(1.0);
        Lattice::HalfLineTruncated(x_max + reach.ceil() as usize + 1)
    }
}

/// Centered occupations; `eta[i]` is site `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub eta: Vec<i8>,
}

impl Configuration {
    pub fn new(eta: Vec<i8>) -> Result<Self> {
        if let Some(v) = eta.iter().find(|v| **v != 1 && **v != -1) {
            return Err(Error::InvalidConfiguration(format!("site value {v} not in {{-1, +1}}")));
        }
        Ok(Self { eta })
    }

    pub fn empty(n: usize) -> Self {
        Self { eta: vec![-1; n] }
    }

    pub fn alternating(n: usize) -> Self {
        Self { eta: (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect() }
    }

    pub fn bernoulli<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Self {
        Self { eta: (0..n).map(|_| if rng.gen::<f64>() < rho { 1 } else { -1 }).collect() }
    }

    /// State index with bit `i` set when site `i + 1` is occupied.
    pub fn index(&self) -> usize {
        self.eta.iter().enumerate().fold(0, |acc, (i, &v)| if v == 1 { acc | (1 << i) } else { acc })
    }

    pub fn from_index(n: usize, idx: usize) -> Self {
        Self { eta: (0..n).map(|i| if idx >> i & 1 == 1 { 1 } else { -1 }).collect() }
    }

    /// Site value at the 1-based position `x`.
    pub fn at(&self, x: usize) -> i8 {
        self.eta[x - 1]
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeightField {
    pub h: Vec<i64>,
    pub h0_counter: i64,
}

impl HeightField {
    pub fn from_config(config: &Configuration, h0: i64) -> Self {
        let mut h = Vec::with_capacity(config.len() + 1);
        h.push(h0);
        let mut acc = h0;
        for &e in &config.eta {
            acc += e as i64;
            h.push(acc);
        }
        Self { h, h0_counter: h0 }
    }

    pub fn new(h: Vec<i64>) -> Result<Self> {
        if h.len() < 2 {
            return Err(Error::InvalidConfiguration("height field needs at least two sites".into()));
        }
        if let Some(w) = h.windows(2).position(|w| (w[1] - w[0]).abs() != 1) {
            return Err(Error::InvalidConfiguration(format!("|grad h({w})| != 1")));
        }
        Ok(Self { h0_counter: h[0], h })
    }

    pub fn to_config(&self) -> Configuration {
        Configuration { eta: self.h.windows(2).map(|w| (w[1] - w[0]) as i8).collect() }
    }

    pub fn is_consistent_with(&self, config: &Configuration) -> bool {
        self.h.len() == config.len() + 1
            && self.h[0] == self.h0_counter
            && self.h.windows(2).zip(&config.eta).all(|(w, &e)| w[1] - w[0] == e as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub config: Configuration,
    pub height: HeightField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub seed: u64,
    pub event_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// Particle at `x` moves to `x + 1`.
    RightJump(usize),
    /// Particle at `x + 1` moves to `x`.
    LeftJump(usize),
    CreateLeft,
    AnnihilateLeft,
    CreateRight,
    AnnihilateRight,
}

/// Every possible event with its rate, zero rates included.
pub fn event_rates(config: &Configuration, params: &ModelParams, lattice: &Lattice) -> Vec<(Event, f64)> {
    let n = config.len();
    let mut out = Vec::with_capacity(2 * n + 2);
    for x in 1..n {
        let (a, b) = (config.at(x) as f64, config.at(x + 1) as f64);
        let occ_empty = 0.25 * (1.0 + a) * (1.0 - b);
        let empty_occ = 0.25 * (1.0 - a) * (1.0 + b);
        out.push((Event::RightJump(x), params.p * occ_empty));
        out.push((Event::LeftJump(x), params.q * empty_occ));
    }
    if n > 0 {
        let e1 = config.at(1) as f64;
        out.push((Event::CreateLeft, params.alpha * 0.5 * (1.0 - e1)));
        out.push((Event::AnnihilateLeft, params.gamma * 0.5 * (1.0 + e1)));
        if lattice.has_right_reservoir() {
            let en = config.at(n) as f64;
            out.push((Event::CreateRight, params.delta * 0.5 * (1.0 - en)));
            out.push((Event::AnnihilateRight, params.beta * 0.5 * (1.0 + en)));
        }
    }
    out
}

/// Independent stream for replica `index` under a master seed.
pub fn replica_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Default)]
struct BondSet {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl BondSet {
    fn with_capacity(n: usize) -> Self {
        Self { items: Vec::with_capacity(n), pos: vec![usize::MAX; n + 1] }
    }

    fn insert(&mut self, x: usize) {
        if self.pos[x] == usize::MAX {
            self.pos[x] = self.items.len();
            self.items.push(x);
        }
    }

    fn remove(&mut self, x: usize) {
        let i = self.pos[x];
        if i != usize::MAX {
            let last = self.items.pop().unwrap();
            if last != x {
                self.items[i] = last;
                self.pos[last] = i;
            }
            self.pos[x] = usize::MAX;
        }
    }
}

/// Particle system state with incrementally maintained event buckets.
#[derive(Debug, Clone)]
pub struct AsepState {
    params: ModelParams,
    lattice: Lattice,
    eta: Vec<i8>,
    h: Vec<i64>,
    right: BondSet,
    left: BondSet,
    time: f64,
    events: u64,
}

impl AsepState {
    pub fn new(initial: &Configuration, h0: i64, params: &ModelParams, lattice: &Lattice) -> Result<Self> {
        let n = lattice.n();
        if n == 0 {
            return Err(Error::InvalidConfiguration("empty lattice".into()));
        }
        if initial.len() != n {
            return Err(Error::InvalidConfiguration(format!(
                "configuration has {} sites, lattice has {n}",
                initial.len()
            )));
        }
        let height = HeightField::from_config(initial, h0);
        let mut st = Self {
            params: *params,
            lattice: *lattice,
            eta: initial.eta.clone(),
            h: height.h,
            right: BondSet::with_capacity(n),
            left: BondSet::with_capacity(n),
            time: 0.0,
            events: 0,
        };
        for x in 1..n {
            st.refresh_bond(x);
        }
        Ok(st)
    }

    fn refresh_bond(&mut self, x: usize) {
        let n = self.eta.len();
        if x == 0 || x >= n {
            return;
        }
        let (a, b) = (self.eta[x - 1], self.eta[x]);
        if a == 1 && b == -1 {
            self.right.insert(x);
        } else {
            self.right.remove(x);
        }
        if a == -1 && b == 1 {
            self.left.insert(x);
        } else {
            self.left.remove(x);
        }
    }

    fn left_rate(&self) -> f64 {
        if self.eta[0] == -1 {
            self.params.alpha
        } else {
            self.params.gamma
        }
    }

    fn right_rate(&self) -> f64 {
        if !self.lattice.has_right_reservoir() {
            0.0
        } else if self.eta[self.eta.len() - 1] == -1 {
            self.params.delta
        } else {
            self.params.beta
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.params.p * self.right.items.len() as f64
            + self.params.q * self.left.items.len() as f64
            + self.left_rate()
            + self.right_rate()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn heights(&self) -> &[i64] {
        &self.h
    }

    pub fn eta(&self) -> &[i8] {
        &self.eta
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            config: Configuration { eta: self.eta.clone() },
            height: HeightField { h: self.h.clone(), h0_counter: self.h[0] },
        }
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R, total: f64) -> Event {
        let n = self.eta.len();
        let mut u = rng.gen::<f64>() * total;
        let wr = self.params.p * self.right.items.len() as f64;
        if u < wr {
            return Event::RightJump(self.right.items[rng.gen_range(0..self.right.items.len())]);
        }
        u -= wr;
        let wl = self.params.q * self.left.items.len() as f64;
        if u < wl {
            return Event::LeftJump(self.left.items[rng.gen_range(0..self.left.items.len())]);
        }
        u -= wl;
        let lr = self.left_rate();
        if u < lr || self.right_rate() == 0.0 {
            return if self.eta[0] == -1 { Event::CreateLeft } else { Event::AnnihilateLeft };
        }
        if self.eta[n - 1] == -1 {
            Event::CreateRight
        } else {
            Event::AnnihilateRight
        }
    }

    /// Applies one event, keeping heights and buckets in sync.
    pub fn apply(&mut self, ev: Event) {
        let n = self.eta.len();
        match ev {
            Event::RightJump(x) => {
                self.eta[x - 1] = -1;
                self.eta[x] = 1;
                self.h[x] -= 2;
                self.refresh_around(x, x + 1);
            }
            Event::LeftJump(x) => {
                self.eta[x - 1] = 1;
                self.eta[x] = -1;
                self.h[x] += 2;
                self.refresh_around(x, x + 1);
            }
            Event::CreateLeft => {
                self.eta[0] = 1;
                self.h[0] -= 2;
                self.refresh_bond(1);
            }
            Event::AnnihilateLeft => {
                self.eta[0] = -1;
                self.h[0] += 2;
                self.refresh_bond(1);
            }
            Event::CreateRight => {
                self.eta[n - 1] = 1;
                self.h[n] += 2;
                self.refresh_bond(n - 1);
            }
            Event::AnnihilateRight => {
                self.eta[n - 1] = -1;
                self.h[n] -= 2;
                self.refresh_bond(n - 1);
            }
        }
        self.events += 1;
    }

    fn refresh_around(&mut self, s1: usize, s2: usize) {
        for x in [s1.saturating_sub(1), s1, s2] {
            self.refresh_bond(x);
        }
    }

    /// Advances to the next event unless it falls after `until`; then time is set to `until`.
    pub fn step_until<R: Rng + ?Sized>(&mut self, rng: &mut R, until: f64) -> Option<Event> {
        let total = self.total_rate();
        if total <= 0.0 {
            self.time = self.time.max(until);
            return None;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if self.time + wait > until {
            self.time = until;
            return None;
        }
        self.time += wait;
        let ev = self.pick(rng, total);
        self.apply(ev);
        Some(ev)
    }

    /// Runs to `until`, calling `hook` after each event.
    pub fn run_until<R: Rng + ?Sized>(&mut self, rng: &mut R, until: f64, mut hook: impl FnMut(&Self, Event)) {
        while self.time < until {
            match self.step_until(rng, until) {
                Some(ev) => hook(self, ev),
                None => break,
            }
        }
    }
}

fn check_sample_times(horizon: f64, sample_times: &[f64]) -> Result<()> {
    if !(horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be >= 0, got {horizon}")));
    }
    if sample_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("sample_times must be strictly increasing".into()));
    }
    if sample_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(Error::InvalidParameter("sample_times must lie in [0, horizon]".into()));
    }
    Ok(())
}

/// Gillespie simulation from `initial` with `h(0) = 0`.
pub fn simulate(
    initial: &Configuration,
    params: &ModelParams,
    lattice: &Lattice,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr = simulate_with_rng(initial, params, lattice, horizon, sample_times, &mut rng)?;
    tr.seed = seed;
    Ok(tr)
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    initial: &Configuration,
    params: &ModelParams,
    lattice: &Lattice,
    horizon: f64,
    sample_times: &[f64],
    rng: &mut R,
) -> Result<Trajectory> {
    check_sample_times(horizon, sample_times)?;
    let mut st = AsepState::new(initial, 0, params, lattice)?;
    let mut snapshots = Vec::with_capacity(sample_times.len());
    for &ts in sample_times {
        st.run_until(rng, ts, |_, _| {});
        snapshots.push(st.snapshot());
    }
    st.run_until(rng, horizon, |_, _| {});
    Ok(Trajectory { sample_times: sample_times.to_vec(), snapshots, seed: 0, event_count: st.event_count() })
}

fn sos_moves(h: &[i64], params: &ModelParams, lattice: &Lattice, out: &mut Vec<(usize, i64, f64)>) {
    out.clear();
    let n = h.len() - 1;
    let left_slope = h[1] - h[0];
    out.push((0, 2, if left_slope == 1 { params.gamma } else { 0.0 }));
    out.push((0, -2, if left_slope == -1 { params.alpha } else { 0.0 }));
    for x in 1..n {
        let lap = h[x - 1] - 2 * h[x] + h[x + 1];
        if lap == 2 {
            out.push((x, 2, params.q));
        } else if lap == -2 {
            out.push((x, -2, params.p));
        }
    }
    if lattice.has_right_reservoir() {
        let right_slope = h[n] - h[n - 1];
        out.push((n, 2, if right_slope == -1 { params.delta } else { 0.0 }));
        out.push((n, -2, if right_slope == 1 { params.beta } else { 0.0 }));
    }
}

/// Height-level dynamics run directly on `h`, without particles.
pub fn sos_simulate(
    initial: &HeightField,
    params: &ModelParams,
    lattice: &Lattice,
    horizon: f64,
    sample_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    check_sample_times(horizon, sample_times)?;
    let mut h = HeightField::new(initial.h.clone())?.h;
    if h.len() != lattice.n() + 1 {
        return Err(Error::InvalidConfiguration("height field does not match lattice".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut moves = Vec::new();
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut t = 0.0;
    let mut events = 0u64;
    let mut next = 0usize;
    loop {
        sos_moves(&h, params, lattice, &mut moves);
        let total: f64 = moves.iter().map(|m| m.2).sum();
        let wait = if total > 0.0 { rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };
        while next < sample_times.len() && sample_times[next] < t + wait {
            let hf = HeightField { h0_counter: h[0], h: h.clone() };
            snapshots.push(Snapshot { config: hf.to_config(), height: hf });
            next += 1;
        }
        if t + wait > horizon {
            break;
        }
        t += wait;
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = moves.len() - 1;
        for (i, m) in moves.iter().enumerate() {
            if u < m.2 {
                chosen = i;
                break;
            }
            u -= m.2;
        }
        while moves[chosen].2 == 0.0 {
            chosen -= 1;
        }
        let (x, dh, _) = moves[chosen];
        h[x] += dh;
        events += 1;
    }
    Ok(Trajectory { sample_times: sample_times.to_vec(), snapshots, seed, event_count: events })
}

fn apply_to_config(config: &Configuration, ev: Event) -> Configuration {
    let mut eta = config.eta.clone();
    let n = eta.len();
    match ev {
        Event::RightJump(x) => {
            eta[x - 1] = -1;
            eta[x] = 1;
        }
        Event::LeftJump(x) => {
            eta[x - 1] = 1;
            eta[x] = -1;
        }
        Event::CreateLeft => eta[0] = 1,
        Event::AnnihilateLeft => eta[0] = -1,
        Event::CreateRight => eta[n - 1] = 1,
        Event::AnnihilateRight => eta[n - 1] = -1,
    }
    Configuration { eta }
}

/// Dense generator of the open system on `n <= 12` sites.
pub fn exact_generator(params: &ModelParams, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 || n > MAX_GENERATOR_SITES {
        return Err(Error::InvalidParameter(format!("exact generator needs 1 <= N <= 12, got {n}")));
    }
    let size = 1usize << n;
    let lattice = Lattice::Interval(n);
    let mut q = DMatrix::zeros(size, size);
    for s in 0..size {
        let c = Configuration::from_index(n, s);
        let mut exit = 0.0;
        for (ev, rate) in event_rates(&c, params, &lattice) {
            if rate > 0.0 {
                let target = apply_to_config(&c, ev).index();
                q[(s, target)] += rate;
                exit += rate;
            }
        }
        q[(s, s)] = -exit;
    }
    Ok(q)
}

/// Solves `pi Q = 0` with the last equation replaced by normalization.
pub fn stationary_measure(generator: &DMatrix<f64>) -> Result<DVector<f64>> {
    let size = generator.nrows();
    if size == 0 || generator.ncols() != size {
        return Err(Error::InvalidParameter("generator must be square and nonempty".into()));
    }
    let mut a = generator.transpose();
    a.row_mut(size - 1).fill(1.0);
    let mut b = DVector::zeros(size);
    b[size - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("generator is reducible".into()))?;
    let scale = generator.amax().max(1.0);
    let residual = (pi.transpose() * generator).amax();
    if !pi.iter().all(|v| v.is_finite()) || residual > 1e-12 * scale {
        return Err(Error::Singular(format!("stationary residual {residual:e}; generator may be reducible")));
    }
    if pi.iter().any(|&v| v < -1e-12) {
        return Err(Error::Singular("negative stationary weight; generator may be reducible".into()));
    }
    Ok(pi)
}

/// Normalized stationary current through the left boundary.
pub fn mean_current(pi: &DVector<f64>, params: &ModelParams, _n: usize) -> f64 {
    let flux: f64 = pi
        .iter()
        .enumerate()
        .map(|(s, &w)| if s & 1 == 0 { w * params.alpha } else { -w * params.gamma })
        .sum();
    flux / (params.p - params.q)
}

/// Product Bernoulli weights in generator state order.
pub fn product_bernoulli(n: usize, rho: f64) -> DVector<f64> {
    DVector::from_iterator(
        1 << n,
        (0..1usize << n).map(|s| {
            let k = s.count_ones() as i32;
            rho.powi(k) * (1.0 - rho).powi(n as i32 - k)
        }),
    )
}

pub fn total_variation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.5 * (a - b).iter().map(|v| v.abs()).sum::<f64>()
}
