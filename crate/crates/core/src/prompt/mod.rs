//! Angle-based spatial relations and the captions, questions and hard
//! negatives generated from them.

mod angles;
mod relation;
mod text;

pub use angles::{
    classify_elevation, classify_horizontal, horizontal_region, relative_geometry, ElevationBand,
    HORIZONTAL_ONLY_LIMIT, VERTICAL_ONLY_LIMIT,
};
pub use relation::{PrimitiveSet, SpatialPrimitive, SpatialRelation};
pub use text::{make_negatives, parse_caption, render_caption, render_question, ParsedCaption};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::Scalar;
use crate::scene::SceneSnapshot;
use crate::seeding::{rng_for, stream};
use crate::{Error, Result};

/// Relation of an object at `pos_a` relative to one at `pos_b`.
pub fn relation_from_geometry<T: Scalar>(pos_a: [T; 3], pos_b: [T; 3], camera_yaw_deg: T) -> Result<SpatialRelation> {
    let (azimuth, elevation) = relative_geometry(pos_a, pos_b, camera_yaw_deg)?;
    let horizontal: Vec<_> = classify_horizontal(azimuth).iter().collect();
    match classify_elevation(elevation) {
        ElevationBand::HorizontalOnly => SpatialRelation::new(&horizontal, None),
        ElevationBand::Mixed(v) => SpatialRelation::new(&horizontal, Some(v)),
        ElevationBand::VerticalOnly(v) => SpatialRelation::new(&[], Some(v)),
    }
}

/// Draws subject and reference without replacement and derives their relation.
pub fn build_relation(snapshot: &SceneSnapshot, seed: u64) -> Result<(String, String, SpatialRelation)> {
    let n = snapshot.objects.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "snapshot has {n} objects, need at least 2"
        )));
    }
    let mut rng = rng_for(seed, &[stream::PROMPT]);
    let mut last_err = Error::DegenerateGeometry;
    for _ in 0..2 {
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        let (oa, ob) = (&snapshot.objects[a], &snapshot.objects[b]);
        match relation_from_geometry(oa.pos, ob.pos, snapshot.camera.yaw) {
            Ok(relation) => return Ok((oa.name.clone(), ob.name.clone(), relation)),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub subject: String,
    pub reference: String,
    pub positive: String,
    pub question: String,
    pub term_swapped: String,
    pub object_swapped: String,
}

/// Relation plus captions for one snapshot; fully determined by `seed`.
pub fn caption_snapshot(snapshot: &SceneSnapshot, seed: u64) -> Result<(SpatialRelation, CaptionSet)> {
    let (subject, reference, relation) = build_relation(snapshot, seed)?;
    let mut rng = rng_for(seed, &[stream::NEGATIVES]);
    let (term_swapped, object_swapped) = make_negatives(&subject, &reference, &relation, &mut rng)?;
    let captions = CaptionSet {
        positive: render_caption(&subject, &reference, &relation),
        question: render_question(&subject, &reference),
        term_swapped,
        object_swapped,
        subject,
        reference,
    };
    Ok((relation, captions))
}
