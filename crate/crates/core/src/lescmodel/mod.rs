//! The LESC verifier: context encoding, attention-based learning
//! enhancement, claim-graph composition with a customized graph
//! convolution, multi-head top-k local attention, HSIC head-diversity loss,
//! per-claim scoring and the final statement verifier.

mod forward;
mod graph;
mod layout;

pub use forward::{
    encode_context, enhance_entity, hsic_loss, local_attention_scores, local_representation,
    min_claim_score, readout, select_topk, statement_loss, triple_loss, ContextVectors,
    EnhancementSide, LescModel, Session, StatementTrace,
};
pub use graph::{build_claim_graph, gcn_forward, ClaimGraph};
pub use layout::ParamLayout;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LescError, Result};

/// Training variants that disable one computation path each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "full")]
    Full,
    /// Drops the per-claim supervision term.
    #[serde(rename = "no_Lt")]
    NoTripleLoss,
    /// Drops the HSIC head-diversity term.
    #[serde(rename = "no_Ld")]
    NoHsic,
    /// Bypasses the context-conditioned learning enhancement.
    #[serde(rename = "no_LE")]
    NoEnhancement,
    /// Removes the global readout from the verifier input.
    #[serde(rename = "no_GSL")]
    NoGlobal,
    /// Removes the local attention path from the verifier input.
    #[serde(rename = "no_LSL")]
    NoLocal,
    /// Removes both composition paths; only the minimum claim score feeds
    /// the verifier.
    #[serde(rename = "no_GSL_LSL")]
    NoGlobalLocal,
}

impl Ablation {
    pub fn all() -> [Ablation; 7] {
        [
            Ablation::Full,
            Ablation::NoTripleLoss,
            Ablation::NoHsic,
            Ablation::NoEnhancement,
            Ablation::NoGlobal,
            Ablation::NoLocal,
            Ablation::NoGlobalLocal,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoTripleLoss => "no_Lt",
            Ablation::NoHsic => "no_Ld",
            Ablation::NoEnhancement => "no_LE",
            Ablation::NoGlobal => "no_GSL",
            Ablation::NoLocal => "no_LSL",
            Ablation::NoGlobalLocal => "no_GSL_LSL",
        }
    }

    pub fn use_enhancement(self) -> bool {
        self != Ablation::NoEnhancement
    }

    pub fn use_global(self) -> bool {
        !matches!(self, Ablation::NoGlobal | Ablation::NoGlobalLocal)
    }

    pub fn use_local(self) -> bool {
        !matches!(self, Ablation::NoLocal | Ablation::NoGlobalLocal)
    }

    pub fn use_triple_loss(self) -> bool {
        self != Ablation::NoTripleLoss
    }

    pub fn use_hsic(self) -> bool {
        self != Ablation::NoHsic
    }
}

impl std::str::FromStr for Ablation {
    type Err = LescError;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::all()
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| LescError::InvalidConfig(format!("unknown ablation variant: {s}")))
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Operator used by the graph-convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GcnVariant {
    #[serde(rename = "A")]
    Plain,
    #[serde(rename = "A2")]
    Squared,
    /// The customized operator Â = A + A².
    #[serde(rename = "A+A2")]
    PlainPlusSquared,
    #[serde(rename = "full")]
    FullyConnected,
}

impl GcnVariant {
    pub fn name(self) -> &'static str {
        match self {
            GcnVariant::Plain => "A",
            GcnVariant::Squared => "A2",
            GcnVariant::PlainPlusSquared => "A+A2",
            GcnVariant::FullyConnected => "full",
        }
    }
}

impl std::str::FromStr for GcnVariant {
    type Err = LescError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(GcnVariant::Plain),
            "A2" => Ok(GcnVariant::Squared),
            "A+A2" => Ok(GcnVariant::PlainPlusSquared),
            "full" => Ok(GcnVariant::FullyConnected),
            _ => Err(LescError::InvalidConfig(format!("unknown GCN variant: {s}"))),
        }
    }
}

/// Adjacency fed to the local self-attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttnAdjacency {
    #[serde(rename = "A")]
    Plain,
    #[serde(rename = "A+A2")]
    Hat,
}

/// Degree normalization of the attention operator. `Symmetric` is
/// D^{-1/2}·A·D^{-1/2}; `AsPrinted` keeps the degree-amplifying
/// D^{+1/2}·A·D^{-1/2} exponents for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttnNorm {
    #[serde(rename = "symmetric")]
    Symmetric,
    #[serde(rename = "as_printed")]
    AsPrinted,
}

/// Architecture hyperparameters (everything except the vocabulary sizes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub n_heads: usize,
    pub top_k: usize,
    /// Verifier hidden width; defaults to 2·dim.
    pub hidden: usize,
    pub gcn_variant: GcnVariant,
    pub attn_adjacency: AttnAdjacency,
    pub attn_norm: AttnNorm,
}

impl ModelShape {
    pub fn new(dim: usize) -> Self {
        ModelShape {
            dim,
            n_heads: 2,
            top_k: 2,
            hidden: 2 * dim,
            gcn_variant: GcnVariant::PlainPlusSquared,
            attn_adjacency: AttnAdjacency::Plain,
            attn_norm: AttnNorm::Symmetric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_heads == 0 || self.top_k == 0 || self.hidden == 0 {
            return Err(LescError::InvalidConfig(
                "model dimensions must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Loss trade-off weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub use_claim_labels: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 1.0,
            lambda2: 0.1,
            use_claim_labels: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1.is_finite() && self.lambda2.is_finite())
            || self.lambda1 < 0.0
            || self.lambda2 < 0.0
        {
            return Err(LescError::InvalidConfig(
                "lambda1 and lambda2 must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// A row-major matrix with explicit shape, the unit of checkpoint storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LescError::DimMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(MatrixData { rows, cols, data })
    }
}

/// All trainable parameters of the verifier except the embedding tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LescParams {
    pub shape: ModelShape,
    pub ablation: Ablation,
    /// Mixing weights of the enhancement attention score.
    pub omega: [f64; 3],
    pub w_h: MatrixData,
    pub w_t: MatrixData,
    /// Claim-encoder convolution filter and bias.
    pub filter: [f64; 3],
    pub bias: f64,
    pub w_g: MatrixData,
    pub b_v: Vec<f64>,
    /// One attention vector per head.
    pub theta: MatrixData,
    pub w_1: MatrixData,
    pub b_fv: Vec<f64>,
    pub w_2: Vec<f64>,
}

/// Versioned container tying a parameter set to the embedding table and
/// vocabulary it was trained with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub vocab_hash: String,
    /// Content hash of the fine-tuned embedding table stored alongside.
    pub emb_hash: String,
    pub loss: LossConfig,
    /// Decision threshold calibrated on the validation split.
    pub threshold: Option<f64>,
    pub params: LescParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(LescError::UnsupportedVersion(cp.version));
        }
        Ok(cp)
    }
}
