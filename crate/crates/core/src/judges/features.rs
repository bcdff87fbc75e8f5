use serde::{Deserialize, Serialize};

use crate::datasets::SampleRecord;
use crate::prompt::SpatialPrimitive;
use crate::scene::SceneSuite;
use crate::{Error, Real, Result};

pub const GENERATIVE_FEATURES: usize = 31;
pub const IMAGE_FEATURES: usize = 40;
pub const TEXT_FEATURES: usize = 20;

const TEXT_FUNCTION_WORDS: [&str; 5] = ["the", "is", "to", "of", "and"];

/// The fixed object-name list the judges encode one-hot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    names: Vec<String>,
}

impl Vocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() != 9 {
            return Err(Error::InvalidArgument(format!(
                "vocabulary needs 9 names, got {}",
                names.len()
            )));
        }
        Ok(Vocabulary { names })
    }

    pub fn from_suite(suite: &SceneSuite) -> Self {
        Vocabulary {
            names: suite.catalog.iter().map(|o| o.name.clone()).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown object {name:?}")))
    }
}

fn wrapped_yaw(yaw: Real) -> Real {
    (yaw + 180.0).rem_euclid(360.0) / 180.0 - 1.0
}

fn finite(values: &[Real]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("sample geometry"))
    }
}

/// One-hot subject and reference, their positions, camera position and yaw,
/// then the subject's offset from the reference in the camera's frame
/// (depth, lateral, height).
pub fn generative_features(vocab: &Vocabulary, r: &SampleRecord) -> Result<[Real; GENERATIVE_FEATURES]> {
    let mut x = [0.0; GENERATIVE_FEATURES];
    let missing = || Error::InvalidArgument("subject or reference not among objects".into());
    let a = r.object(&r.subject).ok_or_else(missing)?;
    let b = r.object(&r.reference).ok_or_else(missing)?;
    x[vocab.index(&r.subject)?] = 1.0;
    x[9 + vocab.index(&r.reference)?] = 1.0;
    x[18..21].copy_from_slice(&a.pos);
    x[21..24].copy_from_slice(&b.pos);
    x[24..27].copy_from_slice(&r.camera.pos);
    x[27] = wrapped_yaw(r.camera.yaw);
    let (s, c) = r.camera.yaw.to_radians().sin_cos();
    let d = [a.pos[0] - b.pos[0], a.pos[1] - b.pos[1], a.pos[2] - b.pos[2]];
    x[28] = d[0] * s + d[2] * c;
    x[29] = d[0] * c - d[2] * s;
    x[30] = d[1];
    finite(&x)?;
    Ok(x)
}

/// Scene-only features: each object's one-hot type and position, then the camera.
pub fn image_features(vocab: &Vocabulary, r: &SampleRecord) -> Result<[Real; IMAGE_FEATURES]> {
    if r.objects.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected 3 objects, got {}",
            r.objects.len()
        )));
    }
    let mut x = [0.0; IMAGE_FEATURES];
    for (k, o) in r.objects.iter().enumerate() {
        let base = 12 * k;
        x[base + vocab.index(&o.name)?] = 1.0;
        x[base + 9..base + 12].copy_from_slice(&o.pos);
    }
    x[36..39].copy_from_slice(&r.camera.pos);
    x[39] = wrapped_yaw(r.camera.yaw);
    finite(&x)?;
    Ok(x)
}

/// Signed token bag: +1 for the first object named, -1 for the second, then
/// counts of spatial terms and function words.
pub fn text_features(vocab: &Vocabulary, text: &str) -> Result<[Real; TEXT_FEATURES]> {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    let name_tokens: Vec<Vec<String>> = vocab
        .names()
        .iter()
        .map(|n| n.split_whitespace().map(str::to_lowercase).collect())
        .collect();
    let mut x = [0.0; TEXT_FEATURES];
    let mut named = 0;
    let mut i = 0;
    while i < tokens.len() {
        let hit = name_tokens
            .iter()
            .enumerate()
            .filter(|(_, nt)| tokens[i..].starts_with(nt))
            .max_by_key(|(_, nt)| nt.len());
        if let Some((k, nt)) = hit {
            x[k] += if named == 0 { 1.0 } else { -1.0 };
            named += 1;
            i += nt.len();
            continue;
        }
        let t = tokens[i].as_str();
        if let Some(p) = SpatialPrimitive::ALL.iter().find(|p| p.name() == t) {
            x[9 + p.index()] += 1.0;
        } else if let Some(w) = TEXT_FUNCTION_WORDS.iter().position(|w| *w == t) {
            x[15 + w] += 1.0;
        }
        i += 1;
    }
    if named != 2 {
        return Err(Error::InvalidArgument(format!(
            "caption names {named} objects, expected 2"
        )));
    }
    Ok(x)
}
