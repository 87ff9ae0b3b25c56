//! Claim-level graph construction and the pure-value graph convolution.

use crate::error::{LescError, Result};
use crate::kgstore::Triple;

use super::{AttnAdjacency, AttnNorm, GcnVariant};

/// Graph over a statement's claims: nodes are claims, edges connect claims
/// sharing an entity. `a_hat = a + a²` is the customized convolution
/// operator; entries are small nonnegative integers stored as f64.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimGraph {
    pub n: usize,
    /// Symmetric binary adjacency, zero diagonal (row-major n×n).
    pub a: Vec<f64>,
    /// a², kept for the graph-variant study.
    pub a_sq: Vec<f64>,
    /// a + a².
    pub a_hat: Vec<f64>,
    /// Row sums of `a`.
    pub deg: Vec<f64>,
}

/// Connects claims i and j whenever they share an entity:
/// {hᵢ, tᵢ} ∩ {hⱼ, tⱼ} ≠ ∅.
pub fn build_claim_graph(claims: &[Triple]) -> ClaimGraph {
    let n = claims.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (ci, cj) = (&claims[i], &claims[j]);
            let shares = ci.head == cj.head
                || ci.head == cj.tail
                || ci.tail == cj.head
                || ci.tail == cj.tail;
            if shares {
                a[i * n + j] = 1.0;
                a[j * n + i] = 1.0;
            }
        }
    }
    let mut a_sq = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                a_sq[i * n + j] += aik * a[k * n + j];
            }
        }
    }
    let a_hat: Vec<f64> = a.iter().zip(&a_sq).map(|(x, y)| x + y).collect();
    let deg: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    ClaimGraph { n, a, a_sq, a_hat, deg }
}

impl ClaimGraph {
    /// Operator matrix used by the graph-convolution layer.
    pub fn gcn_operator(&self, variant: GcnVariant) -> Vec<f64> {
        match variant {
            GcnVariant::Plain => self.a.clone(),
            GcnVariant::Squared => self.a_sq.clone(),
            GcnVariant::PlainPlusSquared => self.a_hat.clone(),
            GcnVariant::FullyConnected => {
                let n = self.n;
                let mut m = vec![1.0; n * n];
                for i in 0..n {
                    m[i * n + i] = 0.0;
                }
                m
            }
        }
    }

    /// Degree-normalized operator for the local self-attention layer.
    /// Degrees come from the chosen adjacency with zero degrees clamped to
    /// one so the operator stays defined on edgeless graphs.
    pub fn attention_operator(&self, adjacency: AttnAdjacency, norm: AttnNorm) -> Vec<f64> {
        let n = self.n;
        let m = match adjacency {
            AttnAdjacency::Plain => &self.a,
            AttnAdjacency::Hat => &self.a_hat,
        };
        let deg: Vec<f64> = (0..n)
            .map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>().max(1.0))
            .collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let left = match norm {
                AttnNorm::Symmetric => 1.0 / deg[i].sqrt(),
                AttnNorm::AsPrinted => deg[i].sqrt(),
            };
            for j in 0..n {
                out[i * n + j] = left * m[i * n + j] / deg[j].sqrt();
            }
        }
        out
    }
}

/// Single graph-convolution layer: V_out = ReLU(Â·V_in·W_gᵀ + b_v), with
/// Â = a + a². Rows of the output are elementwise nonnegative.
pub fn gcn_forward(
    v_in: &[Vec<f64>],
    g: &ClaimGraph,
    w_g: &[Vec<f64>],
    b_v: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = v_in.len();
    if n != g.n {
        return Err(LescError::DimMismatch { expected: g.n, got: n });
    }
    let d = b_v.len();
    if w_g.len() != d || v_in.iter().any(|row| row.len() != w_g[0].len()) {
        return Err(LescError::DimMismatch {
            expected: d,
            got: w_g.len(),
        });
    }
    // P = V_in·W_gᵀ
    let p: Vec<Vec<f64>> = v_in
        .iter()
        .map(|row| {
            w_g.iter()
                .map(|w_row| row.iter().zip(w_row).map(|(a, b)| a * b).sum())
                .collect::<Vec<f64>>()
        })
        .collect();
    let mut out = vec![vec![0.0; d]; n];
    for i in 0..n {
        for o in 0..d {
            let mut acc = b_v[o];
            for j in 0..n {
                acc += g.a_hat[i * n + j] * p[j][o];
            }
            out[i][o] = acc.max(0.0);
        }
    }
    Ok(out)
}
