//! Denoiser architectures: a single-level neighborhood-grouping point
//! encoder, the per-point contact-map denoiser (self-attention transformer
//! over points), and the hand-parameter denoiser (hand-token self-attention
//! with attention pooling and cross-attention over object features).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hand::THETA_DIM;
use crate::io::{read_f32_blob, write_f32_blob};
use crate::maps::rescale_max;

use super::tape::{Tape, Tensor, Var};
use super::timestep_embedding;

/// Hand parameters as 17 tokens of 3 scalars (16 joint rotations + root
/// translation).
pub const HAND_TOKENS: usize = 17;

/// Network sizes; defaults target desk-scale training on one core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Encoder output feature dimension F.
    pub feat_dim: usize,
    /// Encoder hidden width.
    pub enc_hidden: usize,
    /// Neighborhood grouping radius in meters.
    pub group_radius: f64,
    /// Neighbor cap per group (ties broken by point index).
    pub group_neighbors: usize,
    /// Transformer token width.
    pub model_dim: usize,
    /// Self-attention blocks in the contact denoiser.
    pub blocks: usize,
    /// Pooled object tokens in the grasp denoiser.
    pub pooled_tokens: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            feat_dim: 128,
            enc_hidden: 64,
            group_radius: 0.05,
            group_neighbors: 32,
            model_dim: 64,
            blocks: 2,
            pooled_tokens: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoiserKind {
    Contact,
    Grasp,
}

/// Conditioning for the contact denoiser: the object cloud with its two
/// scene distance channels (the 5-dimensional per-point input).
#[derive(Debug, Clone)]
pub struct ContactCondition {
    pub points: Vec<Vector3<f64>>,
    pub d_init: Vec<f64>,
    pub d_goal: Vec<f64>,
}

impl ContactCondition {
    pub fn new(points: Vec<Vector3<f64>>, d_init: Vec<f64>, d_goal: Vec<f64>) -> Result<Self> {
        if points.len() != d_init.len() || points.len() != d_goal.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "condition lengths differ: {} points, {} init, {} goal",
                points.len(),
                d_init.len(),
                d_goal.len()
            )));
        }
        if points.is_empty() {
            return Err(CoreError::InvalidArgument("empty condition cloud".into()));
        }
        let hi = rescale_max() + 1e-12;
        for v in d_init.iter().chain(&d_goal) {
            if !v.is_finite() || *v < -1.0 - 1e-12 || *v > hi {
                return Err(CoreError::InvalidArgument(format!(
                    "distance value {v} outside the rescaled range"
                )));
            }
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
            return Err(CoreError::NonFinite("condition points".into()));
        }
        Ok(Self { points, d_init, d_goal })
    }
}

/// One named learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered set of learnable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .tensor
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.data.len()).sum()
    }

    pub fn zero_all(&mut self) {
        for e in &mut self.entries {
            e.tensor.data.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.tensor.data.iter().all(|v| v.is_finite()))
    }
}

/// All learnable tensors of one denoiser plus its architecture, the seed the
/// weights were initialized from, and (for the grasp denoiser) the z-score
/// statistics of the hand parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserWeights {
    pub kind: DenoiserKind,
    pub arch: ArchConfig,
    pub seed: u64,
    pub params: ParamSet,
    pub norm_mean: Option<Vec<f64>>,
    pub norm_std: Option<Vec<f64>>,
}

fn shapes_for(kind: DenoiserKind, a: &ArchConfig) -> Vec<(String, usize, usize)> {
    let (f, h, w) = (a.feat_dim, a.enc_hidden, a.model_dim);
    let enc_in = match kind {
        DenoiserKind::Contact => 5,
        DenoiserKind::Grasp => 3,
    };
    let mut s: Vec<(String, usize, usize)> = vec![
        ("enc.w1".into(), enc_in, h),
        ("enc.b1".into(), 1, h),
        ("enc.w2".into(), h, f),
        ("enc.b2".into(), 1, f),
        ("t.w".into(), w, w),
        ("t.b".into(), 1, w),
    ];
    let attn = |s: &mut Vec<(String, usize, usize)>, prefix: &str| {
        for n in ["wq", "wk", "wv", "wo"] {
            s.push((format!("{prefix}.{n}"), w, w));
        }
        for n in ["bq", "bk", "bv", "bo"] {
            s.push((format!("{prefix}.{n}"), 1, w));
        }
    };
    let mlp = |s: &mut Vec<(String, usize, usize)>, prefix: &str| {
        s.push((format!("{prefix}.w1"), w, 2 * w));
        s.push((format!("{prefix}.b1"), 1, 2 * w));
        s.push((format!("{prefix}.w2"), 2 * w, w));
        s.push((format!("{prefix}.b2"), 1, w));
    };
    match kind {
        DenoiserKind::Contact => {
            s.push(("in.x".into(), 1, w));
            s.push(("in.feat".into(), f, w));
            s.push(("in.b".into(), 1, w));
            for b in 0..a.blocks {
                attn(&mut s, &format!("blk{b}.attn"));
                mlp(&mut s, &format!("blk{b}.mlp"));
            }
            s.push(("head.w".into(), w, 1));
            s.push(("head.b".into(), 1, 1));
        }
        DenoiserKind::Grasp => {
            s.push(("tok.w".into(), 3, w));
            s.push(("tok.b".into(), 1, w));
            s.push(("tok.pos".into(), HAND_TOKENS, w));
            s.push(("obj.in".into(), f + 1, w));
            s.push(("obj.inb".into(), 1, w));
            s.push(("pool.seed".into(), a.pooled_tokens, w));
            attn(&mut s, "pool");
            attn(&mut s, "objblk.attn");
            mlp(&mut s, "objblk.mlp");
            attn(&mut s, "handblk.attn");
            mlp(&mut s, "handblk.mlp");
            attn(&mut s, "cross");
            mlp(&mut s, "crossmlp");
            s.push(("head.w".into(), w, 3));
            s.push(("head.b".into(), 1, 3));
        }
    }
    s
}

/// Seeded initialization: scaled-normal weights (std 1/√fan_in), zero biases
/// and zero output head.
pub fn init_weights(kind: DenoiserKind, arch: ArchConfig, seed: u64) -> DenoiserWeights {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let entries = shapes_for(kind, &arch)
        .into_iter()
        .map(|(name, r, c)| {
            let zero = name.ends_with('b')
                || name.contains(".b")
                || name.starts_with("head.");
            let std = 1.0 / (r as f64).sqrt();
            let data = (0..r * c)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if zero {
                        0.0
                    } else {
                        std * z
                    }
                })
                .collect();
            ParamEntry { name, tensor: Tensor::new(r, c, data) }
        })
        .collect();
    DenoiserWeights {
        kind,
        arch,
        seed,
        params: ParamSet { entries },
        norm_mean: None,
        norm_std: None,
    }
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

/// Precomputed encoder input rows: for each point, up to `cap` neighbors
/// within the radius (nearest first, ties broken by index), padded with the
/// point itself. Each row is [relative xyz, neighbor channel values...].
#[derive(Debug, Clone)]
pub struct Grouping {
    pub rows: Tensor,
    pub group: usize,
}

pub fn group_points(points: &[Vector3<f64>], channels: &[&[f64]], radius: f64, cap: usize) -> Grouping {
    let n = points.len();
    let in_dim = 3 + channels.len();
    let mut data = Vec::with_capacity(n * cap * in_dim);
    for (i, p) in points.iter().enumerate() {
        let mut neigh: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter_map(|(j, q)| {
                let d = (q - p).norm();
                (d <= radius).then_some((d, j))
            })
            .collect();
        neigh.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        neigh.truncate(cap);
        while neigh.len() < cap {
            neigh.push((0.0, i));
        }
        for (_, j) in neigh {
            let rel = points[j] - p;
            data.extend_from_slice(&[rel.x, rel.y, rel.z]);
            for ch in channels {
                data.push(ch[j]);
            }
        }
    }
    Grouping { rows: Tensor::new(n * cap, in_dim, data), group: cap }
}

// ---------------------------------------------------------------------------
// Forward passes (on tape, shared by inference and training)
// ---------------------------------------------------------------------------

pub(crate) fn push_params(tape: &mut Tape, params: &ParamSet) -> (HashMap<String, Var>, Vec<Var>) {
    let mut map = HashMap::new();
    let mut order = Vec::with_capacity(params.entries.len());
    for e in &params.entries {
        let v = tape.leaf(e.tensor.clone());
        map.insert(e.name.clone(), v);
        order.push(v);
    }
    (map, order)
}

fn linear(tape: &mut Tape, x: Var, vars: &HashMap<String, Var>, w: &str, b: &str) -> Var {
    let m = tape.matmul(x, vars[w]);
    tape.add_row(m, vars[b])
}

/// Scaled-dot-product attention with queries from `q_in` and keys/values
/// from `kv_in`, using the four projections under `prefix`.
fn attention(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    q_in: Var,
    kv_in: Var,
    prefix: &str,
    width: usize,
) -> Var {
    let q = linear(tape, q_in, vars, &format!("{prefix}.wq"), &format!("{prefix}.bq"));
    let k = linear(tape, kv_in, vars, &format!("{prefix}.wk"), &format!("{prefix}.bk"));
    let v = linear(tape, kv_in, vars, &format!("{prefix}.wv"), &format!("{prefix}.bv"));
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt);
    let scaled = tape.scale(scores, 1.0 / (width as f64).sqrt());
    let attn = tape.softmax_rows(scaled);
    let y = tape.matmul(attn, v);
    linear(tape, y, vars, &format!("{prefix}.wo"), &format!("{prefix}.bo"))
}

fn mlp(tape: &mut Tape, vars: &HashMap<String, Var>, x: Var, prefix: &str) -> Var {
    let h = linear(tape, x, vars, &format!("{prefix}.w1"), &format!("{prefix}.b1"));
    let h = tape.relu(h);
    linear(tape, h, vars, &format!("{prefix}.w2"), &format!("{prefix}.b2"))
}

/// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
fn self_block(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    x: Var,
    attn_prefix: &str,
    mlp_prefix: &str,
    width: usize,
) -> Var {
    let h = tape.layer_norm_rows(x);
    let a = attention(tape, vars, h, h, attn_prefix, width);
    let x = tape.add(x, a);
    let h = tape.layer_norm_rows(x);
    let m = mlp(tape, vars, h, mlp_prefix);
    tape.add(x, m)
}

pub(crate) fn encoder_forward(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    grouping: &Grouping,
) -> Var {
    let rows = tape.leaf(grouping.rows.clone());
    let h = linear(tape, rows, vars, "enc.w1", "enc.b1");
    let h = tape.relu(h);
    let f = linear(tape, h, vars, "enc.w2", "enc.b2");
    tape.max_pool_rows(f, grouping.group)
}

pub(crate) fn contact_forward(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    arch: &ArchConfig,
    x_t: Var,
    grouping: &Grouping,
    t: usize,
) -> Var {
    let w = arch.model_dim;
    let feats = encoder_forward(tape, vars, grouping);
    let xtok = tape.matmul(x_t, vars["in.x"]);
    let fproj = linear(tape, feats, vars, "in.feat", "in.b");
    let temb = tape.leaf(Tensor::new(1, w, timestep_embedding(t, w)));
    let tproj = linear(tape, temb, vars, "t.w", "t.b");
    let h = tape.add(xtok, fproj);
    let mut h = tape.add_row(h, tproj);
    for b in 0..arch.blocks {
        h = self_block(tape, vars, h, &format!("blk{b}.attn"), &format!("blk{b}.mlp"), w);
    }
    let h = tape.layer_norm_rows(h);
    linear(tape, h, vars, "head.w", "head.b")
}

pub(crate) fn grasp_forward(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    arch: &ArchConfig,
    theta_tokens: Var,
    obj_features: Var,
    t: usize,
) -> Var {
    let w = arch.model_dim;
    let temb = tape.leaf(Tensor::new(1, w, timestep_embedding(t, w)));
    let tproj = linear(tape, temb, vars, "t.w", "t.b");

    // Hand tokens: 17 x 3 projected, with learned positions and the
    // timestep embedding.
    let htok = linear(tape, theta_tokens, vars, "tok.w", "tok.b");
    let htok = tape.add(htok, vars["tok.pos"]);
    let htok = tape.add_row(htok, tproj);

    // Object tokens pooled to a fixed set by attention from learned seeds
    // (permutation-invariant over the object rows), then self-attention.
    let otok = linear(tape, obj_features, vars, "obj.in", "obj.inb");
    let pooled = attention(tape, vars, vars["pool.seed"], otok, "pool", w);
    let pooled = self_block(tape, vars, pooled, "objblk.attn", "objblk.mlp", w);

    // Hand self-attention, then cross-attention into the object tokens.
    let htok = self_block(tape, vars, htok, "handblk.attn", "handblk.mlp", w);
    let hq = tape.layer_norm_rows(htok);
    let okv = tape.layer_norm_rows(pooled);
    let cross = attention(tape, vars, hq, okv, "cross", w);
    let htok = tape.add(htok, cross);
    let hn = tape.layer_norm_rows(htok);
    let m = mlp(tape, vars, hn, "crossmlp");
    let htok = tape.add(htok, m);

    let hn = tape.layer_norm_rows(htok);
    linear(tape, hn, vars, "head.w", "head.b")
}

// ---------------------------------------------------------------------------
// Public inference entry points
// ---------------------------------------------------------------------------

/// Encode a point cloud (plus optional per-point channels) to per-point
/// features of dimension F.
pub fn encode_points(
    points: &[Vector3<f64>],
    channels: &[&[f64]],
    weights: &DenoiserWeights,
) -> Result<Vec<Vec<f64>>> {
    let expected = match weights.kind {
        DenoiserKind::Contact => 2,
        DenoiserKind::Grasp => 0,
    };
    if channels.len() != expected {
        return Err(CoreError::ShapeMismatch(format!(
            "{:?} encoder expects {expected} channels, got {}",
            weights.kind,
            channels.len()
        )));
    }
    for ch in channels {
        if ch.len() != points.len() {
            return Err(CoreError::ShapeMismatch("channel length mismatch".into()));
        }
    }
    let grouping = group_points(points, channels, weights.arch.group_radius, weights.arch.group_neighbors);
    let mut tape = Tape::new();
    let (vars, _) = push_params(&mut tape, &weights.params);
    let out = encoder_forward(&mut tape, &vars, &grouping);
    let t = tape.value(out);
    let f = weights.arch.feat_dim;
    Ok((0..points.len())
        .map(|i| t.data[i * f..(i + 1) * f].to_vec())
        .collect())
}

/// Predict the injected noise on a noisy contact map.
pub fn contact_denoiser(
    x_t: &[f64],
    t: usize,
    cond: &ContactCondition,
    weights: &DenoiserWeights,
) -> Result<Vec<f64>> {
    if weights.kind != DenoiserKind::Contact {
        return Err(CoreError::InvalidArgument("weights are not contact-denoiser weights".into()));
    }
    if x_t.len() != cond.points.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "x_t has {} values but the condition has {} points",
            x_t.len(),
            cond.points.len()
        )));
    }
    if x_t.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite("noisy contact map".into()));
    }
    if !weights.params.is_finite() {
        return Err(CoreError::NonFinite("denoiser weights".into()));
    }
    let grouping = group_points(
        &cond.points,
        &[&cond.d_init, &cond.d_goal],
        weights.arch.group_radius,
        weights.arch.group_neighbors,
    );
    let mut tape = Tape::new();
    let (vars, _) = push_params(&mut tape, &weights.params);
    let x = tape.leaf(Tensor::new(x_t.len(), 1, x_t.to_vec()));
    let out = contact_forward(&mut tape, &vars, &weights.arch, x, &grouping, t);
    Ok(tape.value(out).data.clone())
}

/// Predict the injected noise on a noisy (normalized) hand-parameter vector
/// given task-aware object features (encoder features with the contact-map
/// channel appended, one row per object point).
pub fn grasp_denoiser(
    theta_t: &[f64],
    t: usize,
    object_features: &[Vec<f64>],
    weights: &DenoiserWeights,
) -> Result<Vec<f64>> {
    if weights.kind != DenoiserKind::Grasp {
        return Err(CoreError::InvalidArgument("weights are not grasp-denoiser weights".into()));
    }
    if theta_t.len() != THETA_DIM {
        return Err(CoreError::ShapeMismatch(format!(
            "theta_t has {} values, expected {THETA_DIM}",
            theta_t.len()
        )));
    }
    let fw = weights.arch.feat_dim + 1;
    if object_features.is_empty() || object_features.iter().any(|r| r.len() != fw) {
        return Err(CoreError::ShapeMismatch(format!(
            "object features must be non-empty rows of width {fw}"
        )));
    }
    if theta_t.iter().any(|v| !v.is_finite())
        || object_features.iter().flatten().any(|v| !v.is_finite())
    {
        return Err(CoreError::NonFinite("grasp denoiser inputs".into()));
    }
    let mut tape = Tape::new();
    let (vars, _) = push_params(&mut tape, &weights.params);
    let tokens = tape.leaf(Tensor::new(HAND_TOKENS, 3, theta_t.to_vec()));
    let flat: Vec<f64> = object_features.iter().flatten().copied().collect();
    let feats = tape.leaf(Tensor::new(object_features.len(), fw, flat));
    let out = grasp_forward(&mut tape, &vars, &weights.arch, tokens, feats, t);
    Ok(tape.value(out).data.clone())
}

// ---------------------------------------------------------------------------
// Serialization: JSON shape manifest + little-endian float32 payload
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WeightsManifest {
    kind: DenoiserKind,
    arch: ArchConfig,
    seed: u64,
    entries: Vec<(String, usize, usize)>,
    norm_mean: Option<Vec<f64>>,
    norm_std: Option<Vec<f64>>,
    payload: String,
}

fn payload_path(json_path: &Path) -> std::path::PathBuf {
    json_path.with_extension("f32")
}

/// Write the manifest to `json_path` and the float32 payload next to it.
/// Weights are stored in single precision.
pub fn save_weights(weights: &DenoiserWeights, json_path: &Path) -> Result<()> {
    let payload = payload_path(json_path);
    let manifest = WeightsManifest {
        kind: weights.kind,
        arch: weights.arch,
        seed: weights.seed,
        entries: weights
            .params
            .entries
            .iter()
            .map(|e| (e.name.clone(), e.tensor.rows, e.tensor.cols))
            .collect(),
        norm_mean: weights.norm_mean.clone(),
        norm_std: weights.norm_std.clone(),
        payload: payload
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&manifest)?)?;
    let flat: Vec<f64> = weights
        .params
        .entries
        .iter()
        .flat_map(|e| e.tensor.data.iter().copied())
        .collect();
    write_f32_blob(&payload, &flat)
}

pub fn load_weights(json_path: &Path) -> Result<DenoiserWeights> {
    let manifest: WeightsManifest = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    let payload = json_path
        .parent()
        .map(|d| d.join(&manifest.payload))
        .unwrap_or_else(|| manifest.payload.clone().into());
    let flat = read_f32_blob(&payload)?;
    let want: usize = manifest.entries.iter().map(|(_, r, c)| r * c).sum();
    if flat.len() != want {
        return Err(CoreError::Schema(format!(
            "weights payload has {} scalars, manifest expects {want}",
            flat.len()
        )));
    }
    let mut offset = 0;
    let entries = manifest
        .entries
        .iter()
        .map(|(name, r, c)| {
            let t = Tensor::new(*r, *c, flat[offset..offset + r * c].to_vec());
            offset += r * c;
            ParamEntry { name: name.clone(), tensor: t }
        })
        .collect();
    let weights = DenoiserWeights {
        kind: manifest.kind,
        arch: manifest.arch,
        seed: manifest.seed,
        params: ParamSet { entries },
        norm_mean: manifest.norm_mean,
        norm_std: manifest.norm_std,
    };
    if !weights.params.is_finite() {
        return Err(CoreError::NonFinite("loaded weights".into()));
    }
    let expected = shapes_for(weights.kind, &weights.arch);
    let got: Vec<(String, usize, usize)> = manifest.entries.clone();
    if expected != got {
        return Err(CoreError::Schema("weights manifest does not match architecture".into()));
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> ArchConfig {
        ArchConfig {
            feat_dim: 16,
            enc_hidden: 12,
            group_radius: 0.5,
            group_neighbors: 4,
            model_dim: 16,
            blocks: 1,
            pooled_tokens: 4,
        }
    }

    fn random_condition(rng: &mut ChaCha8Rng, n: usize) -> ContactCondition {
        let points = (0..n)
            .map(|_| {
                nalgebra::Vector3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        let d_init = (0..n).map(|_| rng.gen_range(-1.0..0.2)).collect();
        let d_goal = (0..n).map(|_| rng.gen_range(-1.0..0.2)).collect();
        ContactCondition::new(points, d_init, d_goal).unwrap()
    }

    #[test]
    fn contact_output_shape_and_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cond = random_condition(&mut rng, 10);
        let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = init_weights(DenoiserKind::Contact, small_arch(), 0);
        let out = contact_denoiser(&x, 3, &cond, &w).unwrap();
        assert_eq!(out.len(), 10);
        let mut wz = w.clone();
        wz.params.zero_all();
        let out = contact_denoiser(&x, 3, &cond, &wz).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contact_denoiser_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cond = random_condition(&mut rng, 12);
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut w = init_weights(DenoiserKind::Contact, small_arch(), 1);
        // Nonzero head so the test is not vacuous.
        for e in &mut w.params.entries {
            if e.name.starts_with("head.") {
                for (i, v) in e.tensor.data.iter_mut().enumerate() {
                    *v = 0.05 * (i as f64 + 1.0);
                }
            }
        }
        let base = contact_denoiser(&x, 5, &cond, &w).unwrap();
        // A fixed permutation of the points and all aligned channels.
        let perm: Vec<usize> = vec![7, 0, 11, 3, 9, 1, 5, 10, 2, 8, 4, 6];
        let cond_p = ContactCondition::new(
            perm.iter().map(|&i| cond.points[i]).collect(),
            perm.iter().map(|&i| cond.d_init[i]).collect(),
            perm.iter().map(|&i| cond.d_goal[i]).collect(),
        )
        .unwrap();
        let x_p: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
        let out_p = contact_denoiser(&x_p, 5, &cond_p, &w).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!(
                (out_p[k] - base[i]).abs() < 1e-6,
                "point {i}: {} vs {}",
                out_p[k],
                base[i]
            );
        }
        assert!(base.iter().any(|&v| v.abs() > 1e-9), "degenerate all-zero output");
    }

    #[test]
    fn grasp_output_shape_zero_weights_and_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let arch = small_arch();
        let mut w = init_weights(DenoiserKind::Grasp, arch, 2);
        for e in &mut w.params.entries {
            if e.name.starts_with("head.") {
                for (i, v) in e.tensor.data.iter_mut().enumerate() {
                    *v = 0.03 * (i as f64 + 1.0);
                }
            }
        }
        let theta: Vec<f64> = (0..THETA_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let feats: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..arch.feat_dim + 1).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let base = grasp_denoiser(&theta, 4, &feats, &w).unwrap();
        assert_eq!(base.len(), THETA_DIM);
        assert!(base.iter().any(|&v| v.abs() > 1e-9));

        let mut shuffled = feats.clone();
        shuffled.reverse();
        shuffled.swap(3, 11);
        let out = grasp_denoiser(&theta, 4, &shuffled, &w).unwrap();
        for (a, b) in out.iter().zip(&base) {
            assert!((a - b).abs() < 1e-6);
        }

        let mut wz = w.clone();
        wz.params.zero_all();
        let out = grasp_denoiser(&theta, 4, &feats, &wz).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let w = init_weights(DenoiserKind::Grasp, small_arch(), 3);
        let points: Vec<nalgebra::Vector3<f64>> = (0..9)
            .map(|_| {
                nalgebra::Vector3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        let base = encode_points(&points, &[], &w).unwrap();
        let perm = [4usize, 8, 0, 2, 6, 1, 7, 3, 5];
        let permuted: Vec<_> = perm.iter().map(|&i| points[i]).collect();
        let out = encode_points(&permuted, &[], &w).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for (a, b) in out[k].iter().zip(&base[i]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nonfinite_inputs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cond = random_condition(&mut rng, 6);
        let w = init_weights(DenoiserKind::Contact, small_arch(), 4);
        let mut x = vec![0.0; 6];
        x[3] = f64::NAN;
        assert!(contact_denoiser(&x, 1, &cond, &w).is_err());
        // Kind mismatch is also rejected.
        let wg = init_weights(DenoiserKind::Grasp, small_arch(), 4);
        assert!(contact_denoiser(&vec![0.0; 6], 1, &cond, &wg).is_err());
    }

    #[test]
    fn weights_roundtrip_through_manifest_and_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let mut w = init_weights(DenoiserKind::Grasp, small_arch(), 5);
        w.norm_mean = Some(vec![0.1; THETA_DIM]);
        w.norm_std = Some(vec![1.5; THETA_DIM]);
        save_weights(&w, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.kind, w.kind);
        assert_eq!(back.arch, w.arch);
        assert_eq!(back.seed, w.seed);
        assert_eq!(back.norm_mean, w.norm_mean);
        // Payload is float32: values survive to single precision.
        for (a, b) in back.params.entries.iter().zip(&w.params.entries) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.tensor.data.iter().zip(&b.tensor.data) {
                assert!((x - y).abs() < 1e-6);
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }
}
