//! Configuration-model pairings and their connected components.
//!
//! A [`Pairing`] is a multigraph on vertices `0..n` given by a matching of
//! arms; self-loops and parallel edges are kept. Components come from
//! [`components`] (union-find, the fast path) or from
//! [`explore_components`], which walks the graph from uniformly chosen
//! unexplored vertices and therefore emits components in size-biased order.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arms::{check_arm_total, ArmLayout};
use crate::error::{Error, Result};
use crate::measures::Pmf;
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arm {
    pub vertex: u32,
    pub slot: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PairingRepr", into = "PairingRepr")]
pub struct Pairing {
    pub degrees: Vec<u32>,
    pub matches: Vec<(Arm, Arm)>,
    pub unpaired: Option<Arm>,
}

#[derive(Serialize, Deserialize)]
struct PairingRepr {
    degrees: Vec<u32>,
    matches: Vec<[u32; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unpaired: Option<[u32; 2]>,
}

impl From<Pairing> for PairingRepr {
    fn from(p: Pairing) -> Self {
        Self {
            degrees: p.degrees,
            matches: p
                .matches
                .iter()
                .map(|(a, b)| [a.vertex, a.slot, b.vertex, b.slot])
                .collect(),
            unpaired: p.unpaired.map(|a| [a.vertex, a.slot]),
        }
    }
}

impl TryFrom<PairingRepr> for Pairing {
    type Error = Error;

    fn try_from(r: PairingRepr) -> Result<Self> {
        let pairing = Pairing {
            degrees: r.degrees,
            matches: r
                .matches
                .iter()
                .map(|m| {
                    (
                        Arm {
                            vertex: m[0],
                            slot: m[1],
                        },
                        Arm {
                            vertex: m[2],
                            slot: m[3],
                        },
                    )
                })
                .collect(),
            unpaired: r.unpaired.map(|u| Arm {
                vertex: u[0],
                slot: u[1],
            }),
        };
        pairing.validate()?;
        Ok(pairing)
    }
}

impl Pairing {
    pub fn empty(degrees: Vec<u32>) -> Self {
        Self {
            degrees,
            matches: Vec::new(),
            unpaired: None,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.degrees.len()
    }

    /// Checks that every arm exists and is used at most once.
    pub fn validate(&self) -> Result<()> {
        let layout = ArmLayout::new(&self.degrees);
        let mut used = vec![false; layout.arm_count()];
        let arms = self
            .matches
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .chain(self.unpaired);
        for arm in arms {
            if arm.vertex as usize >= self.degrees.len()
                || arm.slot >= self.degrees[arm.vertex as usize]
            {
                return Err(Error::Parse(format!("arm {arm:?} does not exist")));
            }
            let id = layout.arm(arm.vertex, arm.slot) as usize;
            if std::mem::replace(&mut used[id], true) {
                return Err(Error::Parse(format!("arm {arm:?} used twice")));
            }
        }
        Ok(())
    }

    /// Arms of each vertex that take part in the pairing (matched or the
    /// unpaired one).
    pub fn activated_counts(&self) -> Vec<u32> {
        let mut act = vec![0u32; self.degrees.len()];
        for (a, b) in &self.matches {
            act[a.vertex as usize] += 1;
            act[b.vertex as usize] += 1;
        }
        if let Some(u) = self.unpaired {
            act[u.vertex as usize] += 1;
        }
        act
    }

    fn from_arm_sequence(degrees: Vec<u32>, layout: &ArmLayout, seq: &[u32]) -> Self {
        let arm = |id: u32| Arm {
            vertex: layout.owner(id),
            slot: layout.slot(id),
        };
        let matches = seq
            .chunks_exact(2)
            .map(|c| (arm(c[0]), arm(c[1])))
            .collect();
        let unpaired = (seq.len() % 2 == 1).then(|| arm(seq[seq.len() - 1]));
        Self {
            degrees,
            matches,
            unpaired,
        }
    }
}

/// Uniform pairing of all arms; one arm stays unpaired when the total is
/// odd.
pub fn sample_cm<R: Rng + ?Sized>(degrees: &[u32], rng: &mut R) -> Pairing {
    let layout = ArmLayout::new(degrees);
    let mut seq: Vec<u32> = (0..layout.arm_count() as u32).collect();
    seq.shuffle(rng);
    Pairing::from_arm_sequence(degrees.to_vec(), &layout, &seq)
}

/// Uniform sequence of `b` distinct arms, paired consecutively.
pub fn sample_arm_subset_pairing<R: Rng + ?Sized>(
    degrees: &[u32],
    b: usize,
    rng: &mut R,
) -> Result<Pairing> {
    let layout = ArmLayout::new(degrees);
    check_arm_total(layout.arm_count())?;
    if b > layout.arm_count() {
        return Err(Error::precondition(format!(
            "cannot choose {b} arms out of {}",
            layout.arm_count()
        )));
    }
    let mut pool: Vec<u32> = (0..layout.arm_count() as u32).collect();
    let (chosen, _) = pool.partial_shuffle(rng, b);
    Ok(Pairing::from_arm_sequence(
        degrees.to_vec(),
        &layout,
        chosen,
    ))
}

/// Keeps each arm independently with probability `p`, then pairs the
/// retained arms uniformly.
pub fn sample_percolated<R: Rng + ?Sized>(degrees: &[u32], p: f64, rng: &mut R) -> Result<Pairing> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!(
            "retention probability {p} not in [0,1]"
        )));
    }
    let layout = ArmLayout::new(degrees);
    let mut kept: Vec<u32> = (0..layout.arm_count() as u32)
        .filter(|_| rng.random_bool(p))
        .collect();
    kept.shuffle(rng);
    Ok(Pairing::from_arm_sequence(degrees.to_vec(), &layout, &kept))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    pub size: u32,
    /// Sorted vertex ids.
    pub vertices: Vec<u32>,
    /// Degree -> vertex count.
    pub v_k: BTreeMap<u32, u64>,
    /// (activated arms, degree) -> vertex count.
    #[serde(serialize_with = "crate::pair_map::serialize")]
    pub v_kr: BTreeMap<(u32, u32), u64>,
}

impl Component {
    fn build(mut vertices: Vec<u32>, degrees: &[u32], activated: &[u32]) -> Self {
        vertices.sort_unstable();
        let mut v_k = BTreeMap::new();
        let mut v_kr = BTreeMap::new();
        for &v in &vertices {
            let d = degrees[v as usize];
            *v_k.entry(d).or_insert(0) += 1;
            *v_kr.entry((activated[v as usize], d)).or_insert(0) += 1;
        }
        Self {
            size: vertices.len() as u32,
            vertices,
            v_k,
            v_kr,
        }
    }

    pub fn min_vertex(&self) -> u32 {
        self.vertices[0]
    }

    /// Number of vertices of degree `k`.
    pub fn count_of_degree(&self, k: u32) -> u64 {
        self.v_k.get(&k).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentStats {
    /// Sorted by size descending, then smallest vertex id.
    pub components: Vec<Component>,
}

impl ComponentStats {
    pub fn largest(&self) -> Option<&Component> {
        self.components.first()
    }

    pub fn second(&self) -> Option<&Component> {
        self.components.get(1)
    }

    /// Writes `component_id,size,k,count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["component_id", "size", "k", "count"])?;
        for (id, c) in self.components.iter().enumerate() {
            for (k, count) in &c.v_k {
                w.write_record([
                    id.to_string(),
                    c.size.to_string(),
                    k.to_string(),
                    count.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Connected components by union-find.
pub fn components(pairing: &Pairing) -> ComponentStats {
    let n = pairing.vertex_count();
    let mut uf = UnionFind::new(n);
    for (a, b) in &pairing.matches {
        uf.union(a.vertex, b.vertex);
    }
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n];
    for v in 0..n as u32 {
        let r = uf.find(v);
        members[r as usize].push(v);
    }
    let activated = pairing.activated_counts();
    let mut comps: Vec<Component> = members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| Component::build(m, &pairing.degrees, &activated))
        .collect();
    comps.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(a.min_vertex().cmp(&b.min_vertex()))
    });
    ComponentStats { components: comps }
}

/// Components in the order an exploration discovers them.
///
/// C1: pick a uniform white vertex, colour it red and make its arms active.
/// C2: take an active arm; if its partner is on a white vertex, colour that
/// vertex red and activate its other arms. C3: when no active arm is left the
/// component is complete; go back to C1. Arms are matched in advance (the
/// combinatorial variant), so no clocks are involved.
pub fn explore_components<R: Rng + ?Sized>(pairing: &Pairing, rng: &mut R) -> Vec<Component> {
    let n = pairing.vertex_count();
    let layout = ArmLayout::new(&pairing.degrees);
    const NONE: u32 = u32::MAX;
    let mut partner = vec![NONE; layout.arm_count()];
    for (a, b) in &pairing.matches {
        let (ia, ib) = (layout.arm(a.vertex, a.slot), layout.arm(b.vertex, b.slot));
        partner[ia as usize] = ib;
        partner[ib as usize] = ia;
    }
    let activated = pairing.activated_counts();

    // White vertices, with positions for O(1) removal.
    let mut white: Vec<u32> = (0..n as u32).collect();
    let mut pos: Vec<u32> = (0..n as u32).collect();
    let remove_white = |v: u32, white: &mut Vec<u32>, pos: &mut Vec<u32>| {
        let i = pos[v as usize] as usize;
        let last = *white.last().expect("nonempty");
        white.swap_remove(i);
        if last != v {
            pos[last as usize] = i as u32;
        }
        pos[v as usize] = NONE;
    };

    let mut out = Vec::new();
    let mut active: Vec<u32> = Vec::new();
    while !white.is_empty() {
        let root = white[rng.random_range(0..white.len())];
        remove_white(root, &mut white, &mut pos);
        let mut members = vec![root];
        active.extend(layout.arms_of(root));
        while let Some(arm) = active.pop() {
            let q = partner[arm as usize];
            if q == NONE {
                continue;
            }
            let v = layout.owner(q);
            if pos[v as usize] != NONE {
                remove_white(v, &mut white, &mut pos);
                members.push(v);
                active.extend(layout.arms_of(v).filter(|&x| x != q));
            }
        }
        out.push(Component::build(members, &pairing.degrees, &activated));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalWindowPrediction {
    pub c1_size: f64,
    /// Predicted number of degree-`k` vertices in the largest component.
    pub v_k: Vec<f64>,
    pub gamma: f64,
}

/// Largest-component forecast `2 (m_1/m_3) n gamma` in the critical window,
/// with its degree profile `2 k pi(k)/m_3 n gamma`.
pub fn critical_window_prediction(pi: &Pmf, n: usize) -> Result<CriticalWindowPrediction> {
    let gamma = pi.gamma_param();
    let m1 = pi.factorial_moment(1);
    let m3 = pi.factorial_moment(3);
    if gamma <= 0.0 {
        return Err(Error::precondition(format!(
            "critical window forecast needs gamma > 0, got {gamma}"
        )));
    }
    if m3 <= 0.0 {
        return Err(Error::precondition(
            "critical window forecast needs m_3 > 0",
        ));
    }
    let scale = n as f64 * gamma;
    Ok(CriticalWindowPrediction {
        c1_size: 2.0 * m1 / m3 * scale,
        v_k: pi
            .weights()
            .iter()
            .enumerate()
            .map(|(k, &p)| 2.0 * k as f64 * p / m3 * scale)
            .collect(),
        gamma,
    })
}

/// `sum_k k |v_k/(n gamma) - 2 k pi(k)/m_3|` for an observed component.
pub fn degree_profile_discrepancy(comp: &Component, pi: &Pmf, n: usize) -> f64 {
    let gamma = pi.gamma_param();
    let m3 = pi.factorial_moment(3);
    let scale = n as f64 * gamma;
    let kmax = pi
        .k_max()
        .max(comp.v_k.keys().last().copied().unwrap_or(0) as usize);
    (0..=kmax)
        .map(|k| {
            let obs = comp.count_of_degree(k as u32) as f64 / scale;
            let pred = 2.0 * k as f64 * pi.get(k) / m3;
            k as f64 * (obs - pred).abs()
        })
        .sum()
}
