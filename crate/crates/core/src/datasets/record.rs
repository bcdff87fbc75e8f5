use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::prompt::{
    caption_snapshot, parse_caption, relation_from_geometry, render_caption, render_question, PrimitiveSet,
    SpatialRelation,
};
use crate::scene::{CameraPose, SceneSnapshot, SnapshotObject, Vec3};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub pos: Vec3,
    pub yaw: Real,
    pub pitch: Real,
    pub roll: Real,
}

impl From<CameraPose> for CameraRecord {
    fn from(c: CameraPose) -> Self {
        CameraRecord {
            pos: c.position,
            yaw: c.yaw,
            pitch: c.pitch,
            roll: c.roll,
        }
    }
}

impl From<CameraRecord> for CameraPose {
    fn from(c: CameraRecord) -> Self {
        CameraPose {
            position: c.pos,
            yaw: c.yaw,
            pitch: c.pitch,
            roll: c.roll,
        }
    }
}

/// One captioned sample, as persisted in `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: u64,
    pub scene_id: i64,
    pub objects: Vec<SnapshotObject>,
    pub camera: CameraRecord,
    pub subject: String,
    pub reference: String,
    pub relation: SpatialRelation,
    pub caption: String,
    pub question: String,
    pub neg_term: String,
    pub neg_object: String,
    pub episode: u64,
    pub iteration: u64,
}

impl SampleRecord {
    /// Captions `snapshot`; `seed` fixes the object pair and the negatives.
    pub fn from_snapshot(id: u64, snapshot: &SceneSnapshot, seed: u64, episode: u64, iteration: u64) -> Result<Self> {
        let (relation, captions) = caption_snapshot(snapshot, seed)?;
        Ok(SampleRecord {
            id,
            scene_id: snapshot.scene_id,
            objects: snapshot.objects.clone(),
            camera: snapshot.camera.into(),
            subject: captions.subject,
            reference: captions.reference,
            relation,
            caption: captions.positive,
            question: captions.question,
            neg_term: captions.term_swapped,
            neg_object: captions.object_swapped,
            episode,
            iteration,
        })
    }

    pub fn object(&self, name: &str) -> Option<&SnapshotObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            scene_id: self.scene_id,
            step: 0,
            objects: self.objects.clone(),
            camera: self.camera.into(),
        }
    }

    /// Terms of the positive caption, used as rubric ground truth.
    pub fn truth(&self) -> Result<PrimitiveSet> {
        Ok(parse_caption(&self.caption).relation()?.primitives())
    }

    /// Recomputes the relation from the stored geometry and checks that the
    /// stored relation and every caption agree with it.
    pub fn verify(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InconsistentRecord { id: self.id, reason });
        let (Some(a), Some(b)) = (self.object(&self.subject), self.object(&self.reference)) else {
            return fail("subject or reference missing from objects".into());
        };
        if self.subject == self.reference {
            return fail("subject equals reference".into());
        }
        let recomputed = match relation_from_geometry(a.pos, b.pos, self.camera.yaw) {
            Ok(r) => r,
            Err(e) => return fail(format!("geometry: {e}")),
        };
        if recomputed != self.relation {
            return fail(format!(
                "stored relation {:?} but geometry gives {:?}",
                self.relation.primitives().iter().collect::<Vec<_>>(),
                recomputed.primitives().iter().collect::<Vec<_>>()
            ));
        }
        if self.caption != render_caption(&self.subject, &self.reference, &self.relation) {
            return fail("caption does not match relation".into());
        }
        if self.question != render_question(&self.subject, &self.reference) {
            return fail("question does not match objects".into());
        }
        if self.neg_object != render_caption(&self.reference, &self.subject, &self.relation) {
            return fail("object-swapped negative does not match relation".into());
        }
        let negative = match parse_caption(&self.neg_term).relation() {
            Ok(r) => r.primitives(),
            Err(e) => return fail(format!("term-swapped negative: {e}")),
        };
        let truth = self.relation.primitives();
        let flipped: Vec<_> = negative.iter().filter(|p| !truth.contains(*p)).collect();
        let consistent = flipped.len() == 1
            && negative.len() == truth.len()
            && truth.contains(flipped[0].opposite())
            && self.neg_term.starts_with(&format!("The {} is ", self.subject));
        if !consistent {
            return fail("term-swapped negative is not a single-term flip".into());
        }
        Ok(())
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::options()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// SHA-256 of the JSONL encoding of `records`; equals the digest of the file
/// [`write_jsonl`] produces.
pub fn records_digest<T: Serialize>(records: &[T]) -> Result<String> {
    let mut bytes = Vec::new();
    for r in records {
        serde_json::to_writer(&mut bytes, r)?;
        bytes.push(b'\n');
    }
    Ok(crate::sha256_hex(&bytes))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::sha256_hex(&bytes))
}
