//! Flat parameter vector layout.
//!
//! All trainable state (embedding tables plus every dense parameter) lives
//! in one `Vec<f64>` whose entries map one-to-one onto the leaves of the
//! autodiff tape, so gradient extraction and optimizer state stay trivial.

use std::ops::Range;

use rand::Rng;

use crate::error::{LescError, Result};
use crate::kgstore::{EntityId, RelationId};
use crate::scoring::{ClaimEncoderParams, EmbeddingTable};

use super::{Ablation, LescParams, MatrixData, ModelShape};

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub d: usize,
    pub n_heads: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub hidden: usize,
    pub verifier_in: usize,
    pub use_global: bool,
    pub use_local: bool,
    off_relation: usize,
    off_omega: usize,
    off_w_h: usize,
    off_w_t: usize,
    off_filter: usize,
    off_bias: usize,
    off_w_g: usize,
    off_b_v: usize,
    off_theta: usize,
    off_w1: usize,
    off_b_fv: usize,
    off_w2: usize,
    total: usize,
}

impl ParamLayout {
    pub fn new(shape: &ModelShape, ablation: Ablation, n_entities: usize, n_relations: usize) -> Self {
        let d = shape.dim;
        let m = shape.hidden;
        let use_global = ablation.use_global();
        let use_local = ablation.use_local();
        // Verifier input: [s_m ‖ r_global ‖ r_local] restricted to the
        // enabled composition paths.
        let verifier_in = 1
            + if use_global { 2 * d } else { 0 }
            + if use_local { 2 * d * shape.n_heads } else { 0 };

        let off_relation = n_entities * d;
        let off_omega = off_relation + n_relations * d;
        let off_w_h = off_omega + 3;
        let off_w_t = off_w_h + d * 2 * d;
        let off_filter = off_w_t + d * 2 * d;
        let off_bias = off_filter + 3;
        let off_w_g = off_bias + 1;
        let off_b_v = off_w_g + d * d;
        let off_theta = off_b_v + d;
        let off_w1 = off_theta + shape.n_heads * d;
        let off_b_fv = off_w1 + m * verifier_in;
        let off_w2 = off_b_fv + m;
        let total = off_w2 + m;

        ParamLayout {
            d,
            n_heads: shape.n_heads,
            n_entities,
            n_relations,
            hidden: m,
            verifier_in,
            use_global,
            use_local,
            off_relation,
            off_omega,
            off_w_h,
            off_w_t,
            off_filter,
            off_bias,
            off_w_g,
            off_b_v,
            off_theta,
            off_w1,
            off_b_fv,
            off_w2,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn entity_off(&self, e: EntityId) -> usize {
        e as usize * self.d
    }

    pub fn relation_off(&self, r: RelationId) -> usize {
        self.off_relation + r as usize * self.d
    }

    pub fn omega_off(&self) -> usize {
        self.off_omega
    }

    /// Row `i` of the head projection (length 2d).
    pub fn w_h_row(&self, i: usize) -> usize {
        self.off_w_h + i * 2 * self.d
    }

    pub fn w_t_row(&self, i: usize) -> usize {
        self.off_w_t + i * 2 * self.d
    }

    pub fn filter_off(&self) -> usize {
        self.off_filter
    }

    pub fn bias_off(&self) -> usize {
        self.off_bias
    }

    pub fn w_g_row(&self, o: usize) -> usize {
        self.off_w_g + o * self.d
    }

    pub fn b_v_off(&self) -> usize {
        self.off_b_v
    }

    pub fn theta_off(&self, head: usize) -> usize {
        self.off_theta + head * self.d
    }

    pub fn w1_row(&self, o: usize) -> usize {
        self.off_w1 + o * self.verifier_in
    }

    pub fn b_fv_off(&self) -> usize {
        self.off_b_fv
    }

    pub fn w2_off(&self) -> usize {
        self.off_w2
    }

    /// Named ranges of the flat vector, in layout order.
    pub fn segments(&self) -> Vec<(&'static str, Range<usize>)> {
        vec![
            ("entity", 0..self.off_relation),
            ("relation", self.off_relation..self.off_omega),
            ("omega", self.off_omega..self.off_w_h),
            ("w_h", self.off_w_h..self.off_w_t),
            ("w_t", self.off_w_t..self.off_filter),
            ("filter", self.off_filter..self.off_bias),
            ("bias", self.off_bias..self.off_w_g),
            ("w_g", self.off_w_g..self.off_b_v),
            ("b_v", self.off_b_v..self.off_theta),
            ("theta", self.off_theta..self.off_w1),
            ("w_1", self.off_w1..self.off_b_fv),
            ("b_fv", self.off_b_fv..self.off_w2),
            ("w_2", self.off_w2..self.total),
        ]
    }

    /// Human-readable name of a flat coordinate, for optimizer diagnostics.
    pub fn param_name(&self, idx: usize) -> String {
        for (name, range) in self.segments() {
            if range.contains(&idx) {
                let local = idx - range.start;
                return match name {
                    "entity" | "relation" => {
                        format!("{name}[{}][{}]", local / self.d, local % self.d)
                    }
                    _ => format!("{name}[{local}]"),
                };
            }
        }
        format!("<out of range {idx}>")
    }

    /// Fresh parameter vector: embeddings copied from `emb`, projections
    /// started at identity-plus-noise so enhanced representations begin
    /// close to the pretrained ones, encoder taken from pretraining when
    /// available.
    pub fn init_flat(
        &self,
        emb: &EmbeddingTable,
        encoder: Option<&ClaimEncoderParams>,
        rng: &mut impl Rng,
    ) -> Result<Vec<f64>> {
        if emb.dim() != self.d {
            return Err(LescError::DimMismatch { expected: self.d, got: emb.dim() });
        }
        if emb.n_entities() != self.n_entities || emb.n_relations() != self.n_relations {
            return Err(LescError::DimMismatch {
                expected: self.n_entities,
                got: emb.n_entities(),
            });
        }
        let d = self.d;
        let bound = 6.0 / (d as f64).sqrt();
        let mut flat = vec![0.0; self.total];
        flat[..self.off_relation].copy_from_slice(emb.entity_data());
        flat[self.off_relation..self.off_omega].copy_from_slice(emb.relation_data());

        flat[self.off_omega..self.off_omega + 3].fill(1.0);

        for (off, _) in [(self.off_w_h, "w_h"), (self.off_w_t, "w_t")] {
            for i in 0..d {
                flat[off + i * 2 * d + i] = 1.0;
                for j in 0..d {
                    flat[off + i * 2 * d + d + j] = 0.1 * rng.random_range(-bound..bound);
                }
            }
        }

        let enc = encoder.cloned().unwrap_or_else(ClaimEncoderParams::identity_like);
        flat[self.off_filter..self.off_filter + 3].copy_from_slice(&enc.filter);
        flat[self.off_bias] = enc.bias;

        for i in 0..d {
            for j in 0..d {
                let noise = 0.1 * rng.random_range(-bound..bound);
                flat[self.off_w_g + i * d + j] = noise + if i == j { 1.0 } else { 0.0 };
            }
        }
        // b_v stays zero.
        for i in 0..self.n_heads * d {
            flat[self.off_theta + i] = rng.random_range(-bound..bound);
        }
        // The readout magnitudes grow with claim count (Â is unnormalized),
        // so the verifier starts small to keep its tanh units unsaturated.
        let b1 = 0.5 / (self.verifier_in as f64).sqrt();
        for i in 0..self.hidden * self.verifier_in {
            flat[self.off_w1 + i] = rng.random_range(-b1..b1);
        }
        // b_fv stays zero.
        let b2 = 0.5 / (self.hidden as f64).sqrt();
        for i in 0..self.hidden {
            flat[self.off_w2 + i] = rng.random_range(-b2..b2);
        }
        Ok(flat)
    }

    pub fn params_from_flat(&self, flat: &[f64], shape: ModelShape, ablation: Ablation) -> LescParams {
        let d = self.d;
        let grab = |r: Range<usize>| flat[r].to_vec();
        LescParams {
            shape,
            ablation,
            omega: [flat[self.off_omega], flat[self.off_omega + 1], flat[self.off_omega + 2]],
            w_h: MatrixData::new(d, 2 * d, grab(self.off_w_h..self.off_w_t)).unwrap(),
            w_t: MatrixData::new(d, 2 * d, grab(self.off_w_t..self.off_filter)).unwrap(),
            filter: [flat[self.off_filter], flat[self.off_filter + 1], flat[self.off_filter + 2]],
            bias: flat[self.off_bias],
            w_g: MatrixData::new(d, d, grab(self.off_w_g..self.off_b_v)).unwrap(),
            b_v: grab(self.off_b_v..self.off_theta),
            theta: MatrixData::new(self.n_heads, d, grab(self.off_theta..self.off_w1)).unwrap(),
            w_1: MatrixData::new(self.hidden, self.verifier_in, grab(self.off_w1..self.off_b_fv)).unwrap(),
            b_fv: grab(self.off_b_fv..self.off_w2),
            w_2: grab(self.off_w2..self.total),
        }
    }

    pub fn flat_from_params(&self, emb: &EmbeddingTable, params: &LescParams) -> Result<Vec<f64>> {
        let checks = [
            (params.w_h.data.len(), self.d * 2 * self.d),
            (params.w_t.data.len(), self.d * 2 * self.d),
            (params.w_g.data.len(), self.d * self.d),
            (params.b_v.len(), self.d),
            (params.theta.data.len(), self.n_heads * self.d),
            (params.w_1.data.len(), self.hidden * self.verifier_in),
            (params.b_fv.len(), self.hidden),
            (params.w_2.len(), self.hidden),
            (emb.dim(), self.d),
        ];
        for (got, expected) in checks {
            if got != expected {
                return Err(LescError::DimMismatch { expected, got });
            }
        }
        let mut flat = vec![0.0; self.total];
        flat[..self.off_relation].copy_from_slice(emb.entity_data());
        flat[self.off_relation..self.off_omega].copy_from_slice(emb.relation_data());
        flat[self.off_omega..self.off_omega + 3].copy_from_slice(&params.omega);
        flat[self.off_w_h..self.off_w_t].copy_from_slice(&params.w_h.data);
        flat[self.off_w_t..self.off_filter].copy_from_slice(&params.w_t.data);
        flat[self.off_filter..self.off_filter + 3].copy_from_slice(&params.filter);
        flat[self.off_bias] = params.bias;
        flat[self.off_w_g..self.off_b_v].copy_from_slice(&params.w_g.data);
        flat[self.off_b_v..self.off_theta].copy_from_slice(&params.b_v);
        flat[self.off_theta..self.off_w1].copy_from_slice(&params.theta.data);
        flat[self.off_w1..self.off_b_fv].copy_from_slice(&params.w_1.data);
        flat[self.off_b_fv..self.off_w2].copy_from_slice(&params.b_fv);
        flat[self.off_w2..self.total].copy_from_slice(&params.w_2);
        Ok(flat)
    }

    pub fn embeddings_from_flat(&self, flat: &[f64]) -> EmbeddingTable {
        EmbeddingTable::from_flat(
            self.d,
            self.n_entities,
            self.n_relations,
            flat[..self.off_relation].to_vec(),
            flat[self.off_relation..self.off_omega].to_vec(),
        )
        .expect("layout guarantees consistent shapes")
    }
}
