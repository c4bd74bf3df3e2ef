//! Information content and per-melody boundary-strength profiles.
//!
//! The information content of an event with probability p is
//! IC = log2(1/p): the number of bits of surprise. A boundary-strength
//! profile (BSP) is the IC sequence of a melody's notes under a trained
//! model, one value per note; downstream peak picking turns it into
//! boundary predictions.

use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::Melody;
use crate::encoding::encode_melody;
use crate::rbm::RbmModel;
use crate::sampler::{conditional_note_probs, SamplerConfig, SamplerError};

/// Exact CSV header for BSP files.
pub const BSP_CSV_HEADER: &str = "melody_id,note_index,ic";

#[derive(Debug, Error)]
pub enum InfoContentError {
    #[error("probability {0} is not in (0, 1]")]
    NonPositiveProbability(f64),
    #[error("model was trained for n={model_n}, requested n={requested_n}")]
    ConfigMismatch { model_n: usize, requested_n: usize },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("malformed BSP file: {0}")]
    MalformedBspFile(String),
}

/// Boundary-strength profile: one nonnegative IC value per note.
#[derive(Debug, Clone, PartialEq)]
pub struct Bsp {
    pub melody_id: String,
    pub values: Vec<f64>,
}

impl Bsp {
    pub fn new(melody_id: impl Into<String>, values: Vec<f64>) -> Bsp {
        assert!(
            values.iter().all(|v| v.is_finite() && *v >= 0.0),
            "BSP values must be finite and nonnegative"
        );
        Bsp {
            melody_id: melody_id.into(),
            values,
        }
    }
}

/// IC(p) = log2(1/p) bits. Probabilities marginally above 1 from floating
/// error map to 0.
pub fn information_content(p: f64) -> Result<f64, InfoContentError> {
    if !p.is_finite() || p <= 0.0 {
        return Err(InfoContentError::NonPositiveProbability(p));
    }
    Ok((-p.log2()).max(0.0))
}

/// BSP of one melody under a trained model.
///
/// The melody is encoded with the model's viewpoint config, every note's
/// conditional probability is estimated in one particle population, and
/// probabilities map through [`information_content`]. `cfg.seed` keys both
/// the encoder's noise padding and the per-note sampling streams.
pub fn bsp_for_melody(
    model: &RbmModel,
    melody: &Melody,
    n: usize,
    cfg: &SamplerConfig,
) -> Result<Bsp, InfoContentError> {
    if model.n != n || model.r() != n * model.viewpoint.note_width() {
        return Err(InfoContentError::ConfigMismatch {
            model_n: model.n,
            requested_n: n,
        });
    }
    let batch = encode_melody(melody, n, &model.viewpoint, cfg.seed);
    let probs = conditional_note_probs(model, &batch, cfg)?;
    let values = probs
        .into_iter()
        .map(information_content)
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(Bsp::new(melody.id.clone(), values))
}

/// Serialize BSPs with 9 significant digits per IC value.
pub fn bsp_to_csv(bsps: &[Bsp]) -> String {
    let mut out = String::from(BSP_CSV_HEADER);
    out.push('\n');
    for bsp in bsps {
        for (i, v) in bsp.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.8e}", bsp.melody_id, i, v);
        }
    }
    out
}

/// Parse a BSP CSV document; rows of one melody must be consecutive with
/// note indices counting up from 0.
pub fn bsp_from_csv(text: &str) -> Result<Vec<Bsp>, InfoContentError> {
    let bad = |msg: String| InfoContentError::MalformedBspFile(msg);
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != BSP_CSV_HEADER {
        return Err(bad(format!(
            "expected header `{BSP_CSV_HEADER}`, got `{header}`"
        )));
    }
    let mut bsps: Vec<Bsp> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let line_no = ln + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(format!("line {line_no}: expected 3 fields")));
        }
        let index: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("line {line_no}: bad note index `{}`", fields[1])))?;
        let ic: f64 = fields[2]
            .parse()
            .map_err(|_| bad(format!("line {line_no}: bad IC value `{}`", fields[2])))?;
        if !ic.is_finite() || ic < 0.0 {
            return Err(bad(format!("line {line_no}: IC {ic} out of range")));
        }
        match bsps.last_mut() {
            Some(last) if last.melody_id == fields[0] => {
                if index != last.values.len() {
                    return Err(bad(format!(
                        "line {line_no}: note index {index} breaks sequence"
                    )));
                }
                last.values.push(ic);
            }
            _ => {
                if index != 0 {
                    return Err(bad(format!(
                        "line {line_no}: melody `{}` must start at note 0",
                        fields[0]
                    )));
                }
                if bsps.iter().any(|b| b.melody_id == fields[0]) {
                    return Err(bad(format!(
                        "line {line_no}: melody `{}` appears twice",
                        fields[0]
                    )));
                }
                bsps.push(Bsp {
                    melody_id: fields[0].into(),
                    values: vec![ic],
                });
            }
        }
    }
    Ok(bsps)
}
