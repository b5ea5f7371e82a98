//! The frozen particle system.
//!
//! `N` particles carry arms with i.i.d. `Exp(1)` activation clocks. When an
//! arm of a particle in solution rings it binds to the currently pending
//! active free arm, if there is one, and becomes pending otherwise. A bond
//! that lifts a cluster to `alpha` particles or more freezes the whole
//! cluster into the gel; gel particles never interact again.
//!
//! [`FrozenSim`] is the stepper; [`run_frozen`] drives it over a snapshot
//! grid and returns a [`Trajectory`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arms::{check_arm_total, ActivationStream, ArmLayout};
use crate::dynamic_cm::Theta;
use crate::error::{Error, Result};
use crate::gw_local::RootedTree;
use crate::rng::sim_rng;
use crate::union_find::UnionFind;

/// Number of points of the default snapshot grid.
pub const DEFAULT_SNAPSHOTS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrozenConfig {
    pub theta: Theta,
    /// Freezing threshold; `N + 1` disables freezing.
    pub alpha: u64,
    pub t_max: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    /// Whether an activation may bind to a pending arm of the same particle.
    pub allow_self_loops: bool,
    /// Also snapshot right after every gel event.
    pub snapshot_on_gel: bool,
}

impl FrozenConfig {
    /// Config with the default grid of [`DEFAULT_SNAPSHOTS`] uniform times.
    pub fn new(theta: Theta, alpha: u64, t_max: f64, seed: u64) -> Self {
        let k = DEFAULT_SNAPSHOTS;
        let snapshot_times = (0..k).map(|i| t_max * i as f64 / (k - 1) as f64).collect();
        Self {
            theta,
            alpha,
            t_max,
            snapshot_times,
            seed,
            allow_self_loops: true,
            snapshot_on_gel: true,
        }
    }

    pub fn with_snapshots(mut self, times: &[f64]) -> Self {
        self.snapshot_times = times.to_vec();
        self
    }

    pub fn n(&self) -> usize {
        self.theta.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n() as u64;
        if self.alpha < 2 || self.alpha > n + 1 {
            return Err(Error::precondition(format!(
                "alpha = {} must lie in [2, N + 1] = [2, {}]",
                self.alpha,
                n + 1
            )));
        }
        if self.t_max.is_nan() || self.t_max <= 0.0 {
            return Err(Error::precondition("t_max must be positive"));
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.t_max).contains(&t))
        {
            return Err(Error::precondition("snapshot times must lie in [0, t_max]"));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::precondition("snapshot times must be sorted"));
        }
        check_arm_total(self.theta.arm_total() as usize)
    }
}

/// In-solution clusters keyed by `(free arms, mass)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Census {
    /// Particle count used for normalization.
    pub n: u64,
    /// Sorted `((a, m), count)` entries.
    pub entries: Vec<((u32, u32), u64)>,
}

impl Census {
    /// `c(a, m)` as a fraction of `N`.
    pub fn concentration(&self, a: u32, m: u32) -> f64 {
        self.entries
            .binary_search_by_key(&(a, m), |e| e.0)
            .map(|i| self.entries[i].1 as f64 / self.n as f64)
            .unwrap_or(0.0)
    }

    /// `sum_{m >= k} sum_a m c(a, m)`.
    pub fn tail_mass(&self, k: u32) -> f64 {
        let mass: u64 = self
            .entries
            .iter()
            .filter(|((_, m), _)| *m >= k)
            .map(|((_, m), c)| u64::from(*m) * c)
            .sum();
        mass as f64 / self.n as f64
    }

    /// `sum_a c(a, m)`.
    pub fn mass_marginal(&self, m: u32) -> f64 {
        let c: u64 = self
            .entries
            .iter()
            .filter(|((_, mm), _)| *mm == m)
            .map(|e| e.1)
            .sum();
        c as f64 / self.n as f64
    }

    pub fn largest_mass(&self) -> u32 {
        self.entries.iter().map(|((_, m), _)| *m).max().unwrap_or(0)
    }
}

/// A cluster of size `>= alpha` leaving the solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GelEvent {
    /// 1-based index.
    pub k: usize,
    pub tau: f64,
    pub size: u64,
    pub free_arms: u64,
    pub activated_arms: u64,
    /// (activated arms, degree) -> particle count in the frozen cluster.
    #[serde(serialize_with = "crate::pair_map::serialize")]
    pub composition: BTreeMap<(u32, u32), u64>,
    /// Particles in solution just after the event.
    pub solution_size: u64,
    /// Degree counts of the particles in solution just after the event.
    pub solution_degree_counts: Vec<u64>,
}

impl GelEvent {
    /// Forecast `(alpha / S) m_3 / (m_2 (m_2 - m_1))` of the time until the
    /// next gel event, from the degree law left in solution. `None` once
    /// that law is no longer supercritical.
    pub fn predicted_next_gap(&self, alpha: u64) -> Option<f64> {
        let s = self.solution_size as f64;
        if s == 0.0 {
            return None;
        }
        let fm = |i: usize| -> f64 {
            self.solution_degree_counts
                .iter()
                .enumerate()
                .map(|(r, &c)| crate::measures::falling_factorial(r, i) * c as f64)
                .sum::<f64>()
                / s
        };
        let (m1, m2, m3) = (fm(1), fm(2), fm(3));
        (m2 > m1).then(|| alpha as f64 / s * m3 / (m2 * (m2 - m1)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    /// Particles in solution.
    pub n_solution: u64,
    /// Activated arms on particles in solution.
    pub b_solution: u64,
    pub num_gel_events: usize,
    /// Sorted `(k activated, r degree, count)` over particles in solution.
    pub pkr: Vec<(u32, u32, u64)>,
    pub census: Census,
}

impl Snapshot {
    pub fn n_t(&self) -> f64 {
        self.n_solution as f64 / self.census.n as f64
    }

    /// Law of activated arms in solution, `pi_t`.
    pub fn pi_counts(&self) -> Vec<u64> {
        let kmax = self.pkr.iter().map(|e| e.0).max().unwrap_or(0) as usize;
        let mut out = vec![0u64; kmax + 1];
        for &(k, _, c) in &self.pkr {
            out[k as usize] += c;
        }
        out
    }

    /// Degree law in solution, `mu_t`.
    pub fn mu_counts(&self) -> Vec<u64> {
        let rmax = self.pkr.iter().map(|e| e.1).max().unwrap_or(0) as usize;
        let mut out = vec![0u64; rmax + 1];
        for &(_, r, c) in &self.pkr {
            out[r as usize] += c;
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub config: FrozenConfig,
    pub snapshots: Vec<Snapshot>,
    pub gel_events: Vec<GelEvent>,
    /// Activations dropped because self-loops were disabled.
    pub rejected_self_loops: u64,
}

impl Trajectory {
    /// Last snapshot at or before `t`.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().rev().find(|s| s.t <= t + 1e-12)
    }

    pub fn first_gel_time(&self) -> Option<f64> {
        self.gel_events.first().map(|e| e.tau)
    }

    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "n_t", "B_over_N", "num_gel_events"])?;
        let n = self.config.n() as f64;
        for s in &self.snapshots {
            w.write_record([
                format!("{:?}", s.t),
                format!("{:?}", s.n_solution as f64 / n),
                format!("{:?}", s.b_solution as f64 / n),
                s.num_gel_events.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pkr_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "k", "r", "count"])?;
        for s in &self.snapshots {
            for &(k, r, c) in &s.pkr {
                w.write_record([
                    format!("{:?}", s.t),
                    k.to_string(),
                    r.to_string(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_census_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "a", "m", "count"])?;
        for s in &self.snapshots {
            for &((a, m), c) in &s.census.entries {
                w.write_record([
                    format!("{:?}", s.t),
                    a.to_string(),
                    m.to_string(),
                    c.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_gel_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "tau_k", "size"])?;
        for e in &self.gel_events {
            w.write_record([e.k.to_string(), format!("{:?}", e.tau), e.size.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Config echo, seed and headline numbers.
    pub fn summary(&self) -> serde_json::Value {
        let last = self.snapshots.last();
        serde_json::json!({
            "config": {
                "n": self.config.n(),
                "degree_counts": self.config.theta.counts(),
                "alpha": self.config.alpha,
                "t_max": self.config.t_max,
                "allow_self_loops": self.config.allow_self_loops,
                "snapshots": self.config.snapshot_times.len(),
            },
            "seed": self.config.seed,
            "final_n_t": last.map(|s| s.n_t()),
            "gel_events": self.gel_events.len(),
            "first_gel_time": self.first_gel_time(),
            "rejected_self_loops": self.rejected_self_loops,
        })
    }

    /// Writes `trajectory.csv`, `pkr.csv`, `census.csv`, `gel_events.csv`
    /// and `summary.json` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_trajectory_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
        self.write_pkr_csv(fs::File::create(dir.join("pkr.csv"))?)?;
        self.write_census_csv(fs::File::create(dir.join("census.csv"))?)?;
        self.write_gel_events_csv(fs::File::create(dir.join("gel_events.csv"))?)?;
        let f = fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(f, &self.summary())?;
        Ok(())
    }
}

/// Mutable state of one run.
pub struct FrozenSim {
    alpha: u64,
    allow_self_loops: bool,
    degrees: Vec<u32>,
    layout: ArmLayout,
    uf: UnionFind,
    /// Circular member lists of clusters.
    next: Vec<u32>,
    /// Per root: unbound arms of the cluster.
    free: Vec<u32>,
    /// Per root: bonds inside the cluster.
    edges: Vec<u32>,
    in_gel: Vec<bool>,
    activated: Vec<u32>,
    stream: ActivationStream,
    pending: Option<u32>,
    kmax: usize,
    /// `pkr[r * (kmax + 1) + k]`.
    pkr: Vec<u64>,
    census: HashMap<(u32, u32), u64>,
    solution_degree_counts: Vec<u64>,
    n_solution: u64,
    b_solution: u64,
    links_solution: u64,
    bonds: Vec<(u32, u32)>,
    gel_events: Vec<GelEvent>,
    rejected_self_loops: u64,
    time: f64,
}

impl FrozenSim {
    pub fn new(config: &FrozenConfig) -> Result<Self> {
        config.validate()?;
        let degrees = config.theta.degrees();
        let n = degrees.len();
        let layout = ArmLayout::new(&degrees);
        let kmax = config.theta.counts().len() - 1;
        let mut pkr = vec![0u64; (kmax + 1) * (kmax + 1)];
        let mut census = HashMap::new();
        for (r, &c) in config.theta.counts().iter().enumerate() {
            pkr[r * (kmax + 1)] = c;
            if c > 0 {
                census.insert((r as u32, 1), c);
            }
        }
        let stream = ActivationStream::new(layout.arm_count(), sim_rng(config.seed));
        Ok(Self {
            alpha: config.alpha,
            allow_self_loops: config.allow_self_loops,
            free: degrees.clone(),
            degrees,
            layout,
            uf: UnionFind::new(n),
            next: (0..n as u32).collect(),
            edges: vec![0; n],
            in_gel: vec![false; n],
            activated: vec![0; n],
            stream,
            pending: None,
            kmax,
            pkr,
            census,
            solution_degree_counts: config.theta.counts().to_vec(),
            n_solution: n as u64,
            b_solution: 0,
            links_solution: 0,
            bonds: Vec::new(),
            gel_events: Vec::new(),
            rejected_self_loops: 0,
            time: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_solution(&self) -> u64 {
        self.n_solution
    }

    pub fn b_solution(&self) -> u64 {
        self.b_solution
    }

    pub fn links_solution(&self) -> u64 {
        self.links_solution
    }

    pub fn pending_arm(&self) -> Option<u32> {
        self.pending
    }

    pub fn gel_events(&self) -> &[GelEvent] {
        &self.gel_events
    }

    pub fn is_in_gel(&self, particle: u32) -> bool {
        self.in_gel[particle as usize]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn activated(&self) -> &[u32] {
        &self.activated
    }

    /// Arms whose clocks have not rung yet.
    pub fn remaining_activations(&self) -> usize {
        self.stream.remaining()
    }

    fn census_add(&mut self, key: (u32, u32)) {
        *self.census.entry(key).or_insert(0) += 1;
    }

    fn census_remove(&mut self, key: (u32, u32)) {
        let c = self.census.get_mut(&key).expect("census key present");
        *c -= 1;
        if *c == 0 {
            self.census.remove(&key);
        }
    }

    /// Processes one activation. Returns `false` when all clocks have rung.
    pub fn step(&mut self) -> bool {
        let Some((arm, t)) = self.stream.next() else {
            return false;
        };
        self.time = t;
        let v = self.layout.owner(arm);
        if self.in_gel[v as usize] {
            return true;
        }
        if !self.allow_self_loops && self.pending.is_some_and(|p| self.layout.owner(p) == v) {
            self.rejected_self_loops += 1;
            return true;
        }
        let r = self.degrees[v as usize] as usize;
        let k = self.activated[v as usize] as usize;
        self.pkr[r * (self.kmax + 1) + k] -= 1;
        self.pkr[r * (self.kmax + 1) + k + 1] += 1;
        self.activated[v as usize] += 1;
        self.b_solution += 1;
        let Some(p) = self.pending.take() else {
            self.pending = Some(arm);
            return true;
        };
        let u = self.layout.owner(p);
        self.bonds.push((u, v));
        self.links_solution += 1;
        let (ru, rv) = (self.uf.find(u), self.uf.find(v));
        if ru == rv {
            let key = (self.free[ru as usize], self.uf.root_size(ru));
            self.census_remove(key);
            self.free[ru as usize] -= 2;
            self.edges[ru as usize] += 1;
            self.census_add((key.0 - 2, key.1));
            return true;
        }
        let ku = (self.free[ru as usize], self.uf.root_size(ru));
        let kv = (self.free[rv as usize], self.uf.root_size(rv));
        self.census_remove(ku);
        self.census_remove(kv);
        let (root, _) = self.uf.union(ru, rv);
        self.free[root as usize] = ku.0 + kv.0 - 2;
        self.edges[root as usize] = self.edges[ru as usize] + self.edges[rv as usize] + 1;
        // Splice the two circular member lists.
        self.next.swap(ru as usize, rv as usize);
        let size = self.uf.root_size(root);
        if u64::from(size) >= self.alpha {
            self.freeze(root, t);
        } else {
            self.census_add((self.free[root as usize], size));
        }
        true
    }

    fn freeze(&mut self, root: u32, tau: f64) {
        let mut composition = BTreeMap::new();
        let (mut size, mut act) = (0u64, 0u64);
        let mut v = root;
        loop {
            let (r, k) = (self.degrees[v as usize], self.activated[v as usize]);
            self.in_gel[v as usize] = true;
            self.pkr[r as usize * (self.kmax + 1) + k as usize] -= 1;
            self.solution_degree_counts[r as usize] -= 1;
            *composition.entry((k, r)).or_insert(0) += 1;
            size += 1;
            act += u64::from(k);
            v = self.next[v as usize];
            if v == root {
                break;
            }
        }
        self.n_solution -= size;
        self.b_solution -= act;
        self.links_solution -= u64::from(self.edges[root as usize]);
        self.gel_events.push(GelEvent {
            k: self.gel_events.len() + 1,
            tau,
            size,
            free_arms: u64::from(self.free[root as usize]),
            activated_arms: act,
            composition,
            solution_size: self.n_solution,
            solution_degree_counts: self.solution_degree_counts.clone(),
        });
    }

    /// Processes every activation with time `<= t` and sets the clock to `t`.
    pub fn advance_to(&mut self, t: f64) {
        while self.stream.peek_time().is_some_and(|s| s <= t) {
            self.step();
        }
        self.time = self.time.max(t);
    }

    /// Runs until the next gel event (or `t_max`); returns whether one
    /// happened.
    pub fn advance_to_next_gel(&mut self, t_max: f64) -> bool {
        let before = self.gel_events.len();
        while self.gel_events.len() == before {
            match self.stream.peek_time() {
                Some(s) if s <= t_max => {
                    self.step();
                }
                _ => {
                    self.time = self.time.max(t_max);
                    return false;
                }
            }
        }
        true
    }

    /// Exact census of in-solution clusters.
    pub fn cluster_census(&self) -> Census {
        let mut entries: Vec<((u32, u32), u64)> =
            self.census.iter().map(|(&k, &c)| (k, c)).collect();
        entries.sort_unstable();
        Census {
            n: self.n() as u64,
            entries,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let w = self.kmax + 1;
        let mut pkr = Vec::new();
        for r in 0..w {
            for k in 0..=r {
                let c = self.pkr[r * w + k];
                if c > 0 {
                    pkr.push((k as u32, r as u32, c));
                }
            }
        }
        pkr.sort_unstable();
        Snapshot {
            t: self.time,
            n_solution: self.n_solution,
            b_solution: self.b_solution,
            num_gel_events: self.gel_events.len(),
            pkr,
            census: self.cluster_census(),
        }
    }

    /// Adjacency of the particles in solution.
    pub fn solution_graph(&self) -> SolutionGraph {
        SolutionGraph::build(self)
    }

    /// Component of a uniform particle in solution.
    pub fn typical_cluster<R: Rng + ?Sized>(
        &self,
        node_cap: usize,
        rng: &mut R,
    ) -> Result<TypicalCluster> {
        self.solution_graph().sample(node_cap, rng)
    }
}

/// A sampled typical cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypicalCluster {
    Tree(RootedTree),
    /// The component contains a self-loop, a multi-edge or a cycle.
    Cyclic,
    /// More than the node cap: not explored further.
    Exceeds,
}

/// Compressed adjacency of the in-solution bond graph.
pub struct SolutionGraph {
    offsets: Vec<u32>,
    adj: Vec<u32>,
    solution: Vec<u32>,
}

impl SolutionGraph {
    fn build(sim: &FrozenSim) -> Self {
        let n = sim.n();
        let live = |&&(u, v): &&(u32, u32)| !sim.in_gel[u as usize] && !sim.in_gel[v as usize];
        let mut deg = vec![0u32; n + 1];
        for &(u, v) in sim.bonds.iter().filter(live) {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut offsets = vec![0u32; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let mut adj = vec![0u32; offsets[n] as usize];
        for &(u, v) in sim.bonds.iter().filter(live) {
            adj[fill[u as usize] as usize] = v;
            fill[u as usize] += 1;
            adj[fill[v as usize] as usize] = u;
            fill[v as usize] += 1;
        }
        let solution = (0..n as u32).filter(|&v| !sim.in_gel[v as usize]).collect();
        Self {
            offsets,
            adj,
            solution,
        }
    }

    pub fn solution_size(&self) -> usize {
        self.solution.len()
    }

    fn neighbours(&self, v: u32) -> &[u32] {
        &self.adj[self.offsets[v as usize] as usize..self.offsets[v as usize + 1] as usize]
    }

    /// Explores the component of `root` breadth-first as a rooted tree.
    pub fn cluster_of(&self, root: u32, node_cap: usize) -> TypicalCluster {
        let mut index: HashMap<u32, usize> = HashMap::from([(root, 0)]);
        let mut parent = vec![0usize];
        let mut via = vec![u32::MAX];
        let mut order = vec![root];
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            let iv = head;
            head += 1;
            let mut parent_seen = false;
            for &w in self.neighbours(v) {
                if w == v {
                    return TypicalCluster::Cyclic;
                }
                if iv > 0 && w == via[iv] && !parent_seen {
                    parent_seen = true;
                    continue;
                }
                if index.contains_key(&w) {
                    return TypicalCluster::Cyclic;
                }
                if order.len() >= node_cap {
                    return TypicalCluster::Exceeds;
                }
                index.insert(w, order.len());
                parent.push(iv);
                via.push(v);
                order.push(w);
            }
        }
        TypicalCluster::Tree(
            RootedTree::from_parents(parent).expect("BFS parents precede children"),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, node_cap: usize, rng: &mut R) -> Result<TypicalCluster> {
        if self.solution.is_empty() {
            return Err(Error::precondition("no particle left in solution"));
        }
        let root = self.solution[rng.random_range(0..self.solution.len())];
        Ok(self.cluster_of(root, node_cap))
    }
}

/// Runs the frozen model over the configured snapshot grid.
pub fn run_frozen(config: &FrozenConfig) -> Result<Trajectory> {
    let mut sim = FrozenSim::new(config)?;
    let mut marks = config.snapshot_times.clone();
    if marks.last().is_none_or(|&t| t < config.t_max) {
        marks.push(config.t_max);
    }
    let mut snapshots = Vec::with_capacity(marks.len());
    for &mark in &marks {
        if config.snapshot_on_gel {
            while sim.advance_to_next_gel(mark) {
                snapshots.push(sim.snapshot());
            }
        } else {
            sim.advance_to(mark);
        }
        sim.time = mark;
        snapshots.push(sim.snapshot());
    }
    Ok(Trajectory {
        config: config.clone(),
        snapshots,
        gel_events: sim.gel_events.clone(),
        rejected_self_loops: sim.rejected_self_loops,
    })
}
