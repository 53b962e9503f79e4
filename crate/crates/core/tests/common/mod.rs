//! Brute-force oracles shared by the integration tests.
//!
//! Everything here works from first principles: exposures are evaluated by
//! scanning neighbor lists, expectations by summing over every treatment
//! vector with its Bernoulli mass.

#![allow(dead_code)]

use enrt_core::linalg::Matrix;
use enrt_core::sample::Unit;
use enrt_core::sensmodel::{EdgeProbabilities, ExposureProfile};
use enrt_core::{EdgeProbs, OutcomeTable, Profile, Sample};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A small population with fixed latent edges and potential outcomes.
pub struct Instance {
    pub sample: Sample,
    /// Symmetric, no self-loops.
    pub ego_adj: Vec<Vec<bool>>,
    /// `alter_adj[a][e]`, always false at the alter's own ego.
    pub alter_adj: Vec<Vec<bool>>,
    pub pot: OutcomeTable,
    /// Shared interaction ratio of every ego.
    pub kappa: f64,
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Skeleton sample: `sizes[e]` alters for ego `e`, two covariates per unit.
pub fn skeleton<R: Rng>(rng: &mut R, sizes: &[usize], p_z: f64) -> Sample {
    let mut units = Vec::new();
    for (e, &k) in sizes.iter().enumerate() {
        let id = format!("e{e}");
        units.push(Unit::ego(
            id.clone(),
            false,
            0.0,
            vec![normal(rng), normal(rng)],
        ));
        for a in 0..k {
            units.push(Unit::alter(
                format!("a{e}.{a}"),
                id.clone(),
                0.0,
                vec![normal(rng), normal(rng)],
            ));
        }
    }
    Sample::from_units(units, p_z).expect("valid skeleton")
}

/// Random instance with `n_e` egos, up to `max_a` alters in total (at
/// least one) and latent edges present with probability `density`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n_e: usize,
    max_a: usize,
    density: f64,
    p_z: f64,
) -> Instance {
    let mut sizes = vec![0usize; n_e];
    let n_a = rng.random_range(1..=max_a);
    for _ in 0..n_a {
        sizes[rng.random_range(0..n_e)] += 1;
    }
    let sample = skeleton(rng, &sizes, p_z);
    let mut ego_adj = vec![vec![false; n_e]; n_e];
    for i in 0..n_e {
        for j in (i + 1)..n_e {
            let b = rng.random_bool(density);
            ego_adj[i][j] = b;
            ego_adj[j][i] = b;
        }
    }
    let alter_adj = (0..sample.n_a())
        .map(|a| {
            let own = sample.alter_ego()[a];
            (0..n_e)
                .map(|e| e != own && rng.random_bool(density))
                .collect()
        })
        .collect();
    let kappa = rng.random_range(0.3..2.5);
    let ego = (0..n_e)
        .map(|_| {
            let (b, tau, c) = (normal(rng), normal(rng) + 1.0, normal(rng));
            [b, b + c, b + tau, b + c + kappa * tau]
        })
        .collect();
    let alter = (0..sample.n_a())
        .map(|_| {
            let b = normal(rng);
            [b, b + normal(rng) + 0.5]
        })
        .collect();
    Instance {
        sample,
        ego_adj,
        alter_adj,
        pot: OutcomeTable { ego, alter },
        kappa,
    }
}

impl Instance {
    pub fn n_e(&self) -> usize {
        self.sample.n_e()
    }

    pub fn n_a(&self) -> usize {
        self.sample.n_a()
    }

    /// Exposures on the full network: `(ego, alter)`.
    pub fn exposures(&self, z: &[bool]) -> (Vec<bool>, Vec<bool>) {
        let mut fe = vec![false; self.n_e()];
        for (i, f) in fe.iter_mut().enumerate() {
            for j in 0..self.n_e() {
                if self.ego_adj[i][j] && z[j] {
                    *f = true;
                }
            }
        }
        let mut fa = vec![false; self.n_a()];
        for (a, f) in fa.iter_mut().enumerate() {
            if z[self.sample.alter_ego()[a]] {
                *f = true;
            }
            for e in 0..self.n_e() {
                if self.alter_adj[a][e] && z[e] {
                    *f = true;
                }
            }
        }
        (fe, fa)
    }

    /// Observed sample under assignment `z`.
    pub fn observe(&self, z: &[bool]) -> Sample {
        let (fe, fa) = self.exposures(z);
        let y_e = (0..self.n_e())
            .map(|i| self.pot.ego[i][2 * z[i] as usize + fe[i] as usize])
            .collect();
        let y_a = (0..self.n_a())
            .map(|a| self.pot.alter[a][fa[a] as usize])
            .collect();
        self.sample
            .with_assignment(z.to_vec(), y_e, y_a)
            .expect("shape")
    }

    pub fn true_ie(&self) -> f64 {
        self.pot.alter.iter().map(|y| y[1] - y[0]).sum::<f64>() / self.n_a() as f64
    }

    pub fn true_de(&self) -> f64 {
        self.pot.ego.iter().map(|y| y[2] - y[0]).sum::<f64>() / self.n_e() as f64
    }

    /// Realized latent edges as a 0/1 probability structure.
    pub fn realized_probs(&self) -> EdgeProbs {
        let n_e = self.n_e();
        let ee = Matrix::from_fn(n_e, n_e, |i, j| self.ego_adj[i][j] as u8 as f64);
        let ae = Matrix::from_fn(self.n_a(), n_e, |a, e| self.alter_adj[a][e] as u8 as f64);
        EdgeProbabilities::from_matrices(ee, ae, self.sample.alter_ego().to_vec())
            .expect("valid adjacency")
    }

    /// Exposure probabilities over the design by enumeration:
    /// `(pi_e, pi_a)`.
    pub fn enumerated_pi(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pe = vec![0.0; self.n_e()];
        let mut pa = vec![0.0; self.n_a()];
        for_each_assignment(self.n_e(), self.sample.p_z(), |z, w| {
            let (fe, fa) = self.exposures(z);
            for (p, f) in pe.iter_mut().zip(&fe) {
                if *f {
                    *p += w;
                }
            }
            for (p, f) in pa.iter_mut().zip(&fa) {
                if *f {
                    *p += w;
                }
            }
        });
        (pe, pa)
    }

    /// Profile of the true (enumerated) exposure probabilities, carrying the
    /// realized ego adjacency for the covariance correction.
    pub fn true_profile(&self) -> Profile {
        let (pi_e, pi_a) = self.enumerated_pi();
        let ep = self.realized_probs();
        ExposureProfile {
            pi_a,
            pi_e,
            three_level: None,
            ego_edges: Some(std::sync::Arc::new(ep.ego_ego_matrix().clone())),
        }
    }

    /// Bernoulli-weighted expectation of `f` over all assignments.
    pub fn expectation(&self, mut f: impl FnMut(&Sample) -> f64) -> f64 {
        let mut acc = 0.0;
        for_each_assignment(self.n_e(), self.sample.p_z(), |z, w| {
            acc += w * f(&self.observe(z));
        });
        acc
    }
}

/// Calls `f(z, mass)` for all `2^n` treatment vectors.
pub fn for_each_assignment(n: usize, p: f64, mut f: impl FnMut(&[bool], f64)) {
    let mut z = vec![false; n];
    for mask in 0u64..(1u64 << n) {
        let mut w = 1.0;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = mask >> i & 1 == 1;
            w *= if *zi { p } else { 1.0 - p };
        }
        f(&z, w);
    }
}

/// Exposure probabilities from edge probabilities by enumerating every
/// edge configuration jointly with every treatment vector:
/// `(pi_e, pi_a, per alter [P(S=0), P(S=1), P(S>=2)])`.
pub fn enumerate_from_rho(ep: &EdgeProbs, p: f64) -> (Vec<f64>, Vec<f64>, Vec<[f64; 3]>) {
    let n_e = ep.n_e();
    let pi_e = (0..n_e)
        .map(|i| {
            let others: Vec<usize> = (0..n_e).filter(|&j| j != i).collect();
            let rho: Vec<f64> = others.iter().map(|&j| ep.ego_ego(i, j)).collect();
            let mut total = 0.0;
            for_each_edge_config(&rho, |edges, we| {
                for_each_assignment(n_e, p, |z, wz| {
                    if others.iter().zip(edges).any(|(&j, &b)| b && z[j]) {
                        total += we * wz;
                    }
                });
            });
            total
        })
        .collect();
    let mut pi_a = Vec::new();
    let mut three = Vec::new();
    for a in 0..ep.n_a() {
        let own = ep.own_ego()[a];
        let others: Vec<usize> = (0..n_e).filter(|&e| e != own).collect();
        let rho: Vec<f64> = others
            .iter()
            .map(|&e| ep.alter_ego(a, e).unwrap())
            .collect();
        let mut exposed = 0.0;
        let mut dist = [0.0; 3];
        for_each_edge_config(&rho, |edges, we| {
            for_each_assignment(n_e, p, |z, wz| {
                let s = others
                    .iter()
                    .zip(edges)
                    .filter(|&(&e, &b)| b && z[e])
                    .count();
                if z[own] || s > 0 {
                    exposed += we * wz;
                }
                dist[s.min(2)] += we * wz;
            });
        });
        pi_a.push(exposed);
        three.push(dist);
    }
    (pi_e, pi_a, three)
}

fn for_each_edge_config(rho: &[f64], mut f: impl FnMut(&[bool], f64)) {
    let n = rho.len();
    let mut b = vec![false; n];
    for mask in 0u64..(1u64 << n) {
        let mut w = 1.0;
        for (k, bk) in b.iter_mut().enumerate() {
            *bk = mask >> k & 1 == 1;
            w *= if *bk { rho[k] } else { 1.0 - rho[k] };
        }
        if w > 0.0 {
            f(&b, w);
        }
    }
}

/// Symmetric random probability matrices for `n_e` egos and the alter
/// layout of `s`, entries drawn from `[0, hi]` with some exact zeros.
pub fn random_probs<R: Rng>(rng: &mut R, s: &Sample, hi: f64) -> EdgeProbs {
    let n_e = s.n_e();
    let mut ee = Matrix::zeros(n_e, n_e);
    for i in 0..n_e {
        for j in (i + 1)..n_e {
            let v = if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.0..hi)
            };
            ee.set(i, j, v);
            ee.set(j, i, v);
        }
    }
    let ae = Matrix::from_fn(s.n_a(), n_e, |_, _| {
        if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(0.0..hi)
        }
    });
    EdgeProbabilities::from_matrices(ee, ae, s.alter_ego().to_vec()).expect("valid")
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
