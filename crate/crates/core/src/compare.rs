//! Membership scores: cosine similarity between embeddings of the original
//! and its restoration, or a negated pixel loss. Larger always means more
//! member-like.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DrcError, Result};
use crate::gridio::read_embedding;
use crate::numerics::{pixel_l1, pixel_mse, Grid};

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub encoder_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncoderKind {
    /// Raw pixel vector.
    Flatten,
    /// Per-cell channel means and standard deviations over `L x L`
    /// subdivisions for each level `L`.
    PatchPyramid { levels: Vec<usize> },
    /// `<dir>/<stem>.emb` sidecars produced by an external encoder.
    External { dir: PathBuf },
}

impl EncoderKind {
    pub fn default_pyramid() -> Self {
        EncoderKind::PatchPyramid {
            levels: vec![1, 2, 4],
        }
    }

    pub fn id(&self) -> String {
        match self {
            EncoderKind::Flatten => "flatten".into(),
            EncoderKind::PatchPyramid { levels } => format!("patch-pyramid{levels:?}"),
            EncoderKind::External { dir } => format!("external:{}", dir.display()),
        }
    }
}

/// Embeds with a built-in encoder. External encoders need a file stem; use
/// [`embed_named`].
pub fn embed(x: &Grid, kind: &EncoderKind) -> Result<Embedding> {
    embed_named(x, kind, None)
}

pub fn embed_named(x: &Grid, kind: &EncoderKind, stem: Option<&str>) -> Result<Embedding> {
    let values = match kind {
        EncoderKind::Flatten => x.data().to_vec(),
        EncoderKind::PatchPyramid { levels } => patch_pyramid(x, levels)?,
        EncoderKind::External { dir } => {
            let stem =
                stem.ok_or_else(|| DrcError::invalid("external encoder needs an image stem"))?;
            load_external(dir, stem)?
        }
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(DrcError::Format(format!(
            "invalid embedding from {}",
            kind.id()
        )));
    }
    Ok(Embedding {
        values,
        encoder_id: kind.id(),
    })
}

pub fn external_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.emb"))
}

fn load_external(dir: &Path, stem: &str) -> Result<Vec<f64>> {
    read_embedding(&external_path(dir, stem))
}

fn patch_pyramid(x: &Grid, levels: &[usize]) -> Result<Vec<f64>> {
    if levels.is_empty() {
        return Err(DrcError::invalid("patch pyramid needs at least one level"));
    }
    let (h, w, ch) = x.shape();
    let mut out = Vec::new();
    for &level in levels {
        if level == 0 || level > h.min(w) {
            return Err(DrcError::invalid(format!(
                "pyramid level {level} invalid for a {h}x{w} image"
            )));
        }
        for i in 0..level {
            let (r0, r1) = (i * h / level, (i + 1) * h / level);
            for j in 0..level {
                let (c0, c1) = (j * w / level, (j + 1) * w / level);
                let n = ((r1 - r0) * (c1 - c0)) as f64;
                for c in 0..ch {
                    let cell = || (r0..r1).flat_map(move |r| (c0..c1).map(move |cc| (r, cc)));
                    let mean = cell().map(|(r, cc)| x.get(r, cc, c)).sum::<f64>() / n;
                    let var = cell()
                        .map(|(r, cc)| (x.get(r, cc, c) - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    out.push(mean);
                    out.push(var.sqrt());
                }
            }
        }
    }
    Ok(out)
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DrcError::invalid(format!(
            "embedding lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn embedding_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.encoder_id != b.encoder_id {
        return Err(DrcError::invalid(format!(
            "cannot compare embeddings from {} and {}",
            a.encoder_id, b.encoder_id
        )));
    }
    cosine(&a.values, &b.values)
}

pub fn membership_score(x: &Grid, x_tilde: &Grid, kind: &EncoderKind) -> Result<f64> {
    x.ensure_same_shape(x_tilde)?;
    embedding_similarity(&embed(x, kind)?, &embed(x_tilde, kind)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelMetric {
    L1,
    Mse,
}

/// Negated pixel loss, so identical images score the maximum `0`.
pub fn pixel_score(x: &Grid, x_tilde: &Grid, metric: PixelMetric) -> Result<f64> {
    let loss = match metric {
        PixelMetric::L1 => pixel_l1(x, x_tilde)?,
        PixelMetric::Mse => pixel_mse(x, x_tilde)?,
    };
    Ok(-loss)
}

/// Scorer selection as it appears in audit configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scorer {
    Flatten,
    PatchPyramid {
        #[serde(default = "default_levels")]
        levels: Vec<usize>,
    },
    External {
        dir: PathBuf,
    },
    Pixel {
        metric: PixelMetric,
    },
}

fn default_levels() -> Vec<usize> {
    vec![1, 2, 4]
}

impl Default for Scorer {
    fn default() -> Self {
        Scorer::PatchPyramid {
            levels: default_levels(),
        }
    }
}

impl Scorer {
    pub fn encoder(&self) -> Option<EncoderKind> {
        match self {
            Scorer::Flatten => Some(EncoderKind::Flatten),
            Scorer::PatchPyramid { levels } => Some(EncoderKind::PatchPyramid {
                levels: levels.clone(),
            }),
            Scorer::External { dir } => Some(EncoderKind::External { dir: dir.clone() }),
            Scorer::Pixel { .. } => None,
        }
    }

    /// Scores `x_tilde` against `x`. The stems name external sidecars and are
    /// ignored by built-in scorers.
    pub fn score(&self, x: &Grid, x_tilde: &Grid, x_stem: &str, x_tilde_stem: &str) -> Result<f64> {
        x.ensure_same_shape(x_tilde)?;
        match self {
            Scorer::Pixel { metric } => pixel_score(x, x_tilde, *metric),
            other => {
                let kind = other.encoder().expect("non-pixel scorers have encoders");
                let a = embed_named(x, &kind, Some(x_stem))?;
                let b = embed_named(x_tilde, &kind, Some(x_tilde_stem))?;
                embedding_similarity(&a, &b)
            }
        }
    }
}
