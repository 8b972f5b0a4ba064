//! Textbook pairwise message passing, written against plain edge lists so it
//! shares no code with the engine. Messages `msg[e][d]` run along edge `e`
//! into its endpoint `d` (0 = lower index, 1 = higher index), in the log
//! domain, updated node by node in index order.

use normprod_core::model::Model;

#[derive(Clone, Copy, Debug)]
pub enum Algorithm {
    /// Sum-product.
    SumProduct,
    /// Max-product.
    MaxProduct,
    /// Sum-TRBP on `M_ts`, with edge weights `ρ`.
    SumTrbp,
    /// NMPLP on `γ_ji`.
    Nmplp,
}

pub struct Edge {
    pub ends: [usize; 2],
    /// `θ[x_lo][x_hi]`
    pub theta: Vec<Vec<f64>>,
}

pub struct Pairwise {
    pub theta_i: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
    pub nbrs: Vec<Vec<(usize, usize)>>, // (edge, side of this node)
}

impl Pairwise {
    pub fn from_model(model: &Model) -> Self {
        let mut edges = Vec::new();
        let mut nbrs = vec![Vec::new(); model.num_vars()];
        for f in model.factors() {
            let (a, b) = (f.scope()[0], f.scope()[1]);
            let (ca, cb) = (model.card(a), model.card(b));
            let theta = (0..ca)
                .map(|xa| (0..cb).map(|xb| f.log_psi()[xa * cb + xb]).collect())
                .collect();
            nbrs[a].push((edges.len(), 0));
            nbrs[b].push((edges.len(), 1));
            edges.push(Edge {
                ends: [a, b],
                theta,
            });
        }
        Self {
            theta_i: model.log_phis().to_vec(),
            edges,
            nbrs,
        }
    }

    pub fn init(&self) -> Vec<[Vec<f64>; 2]> {
        self.edges
            .iter()
            .map(|e| {
                [
                    vec![0.0; self.theta_i[e.ends[0]].len()],
                    vec![0.0; self.theta_i[e.ends[1]].len()],
                ]
            })
            .collect()
    }

    fn pair(&self, e: usize, side: usize, xi: usize, xj: usize) -> f64 {
        if side == 0 {
            self.edges[e].theta[xi][xj]
        } else {
            self.edges[e].theta[xj][xi]
        }
    }

    /// One node-ordered sweep. `rho` holds per-edge weights for sum-TRBP.
    pub fn sweep(&self, alg: Algorithm, rho: &[f64], msg: &mut [[Vec<f64>; 2]]) {
        for i in 0..self.theta_i.len() {
            let mut fresh = Vec::new();
            for &(e, side) in &self.nbrs[i] {
                let j = self.edges[e].ends[1 - side];
                let dj = self.nbrs[j].len() as f64;
                // incoming sum at j over all its edges, and the reverse message j <- i
                let into_j = |x: usize| -> (f64, f64) {
                    let mut all = 0.0;
                    let mut weighted = 0.0;
                    for &(f, s) in &self.nbrs[j] {
                        all += msg[f][s][x];
                        weighted += rho.get(f).copied().unwrap_or(1.0) * msg[f][s][x];
                    }
                    (all, weighted)
                };
                let reverse = &msg[e][1 - side];
                let new: Vec<f64> = (0..self.theta_i[i].len())
                    .map(|xi| {
                        let terms: Vec<f64> = (0..self.theta_i[j].len())
                            .map(|xj| {
                                let (all, weighted) = into_j(xj);
                                let th = self.pair(e, side, xi, xj);
                                let phi = self.theta_i[j][xj];
                                match alg {
                                    Algorithm::SumProduct | Algorithm::MaxProduct => {
                                        th + phi + all - reverse[xj]
                                    }
                                    Algorithm::SumTrbp => {
                                        th / rho[e] + phi + weighted - reverse[xj]
                                    }
                                    Algorithm::Nmplp => {
                                        th + 2.0 / (1.0 + dj) * (phi + all) - reverse[xj]
                                    }
                                }
                            })
                            .collect();
                        match alg {
                            Algorithm::SumProduct | Algorithm::SumTrbp => log_sum_exp(&terms),
                            Algorithm::MaxProduct | Algorithm::Nmplp => {
                                terms.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                            }
                        }
                    })
                    .collect();
                fresh.push((e, side, new));
            }
            for (e, side, new) in fresh {
                msg[e][side] = new;
            }
        }
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Shift a log table so its maximum is 0.
pub fn shifted(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| x - m).collect()
}
