use rand::Rng;

use super::{PrimitiveSet, SpatialPrimitive, SpatialRelation};
use crate::{Error, Result};

/// "The {subject} is {terms} the {reference}."
pub fn render_caption(subject: &str, reference: &str, relation: &SpatialRelation) -> String {
    let phrases: Vec<&str> = relation.ordered().into_iter().map(SpatialPrimitive::phrase).collect();
    let terms = match phrases.as_slice() {
        [] => unreachable!("relations are never empty"),
        [only] => only.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    };
    format!("The {subject} is {terms} the {reference}.")
}

pub fn render_question(subject: &str, reference: &str) -> String {
    format!("What is the position of the {subject} relative to the {reference}?")
}

const FUNCTION_WORDS: [&str; 8] = ["the", "is", "to", "of", "and", "in", "a", "an"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedCaption {
    pub primitives: PrimitiveSet,
    /// Tokens that are neither spatial terms nor function words (object names included).
    pub unknown_tokens: usize,
}

impl ParsedCaption {
    /// Set when no spatial term was recognized.
    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn relation(&self) -> Result<SpatialRelation> {
        SpatialRelation::from_primitives(self.primitives)
    }
}

/// Extracts spatial terms from a caption or free-text answer by word matching.
pub fn parse_caption(text: &str) -> ParsedCaption {
    let mut primitives = PrimitiveSet::EMPTY;
    let mut unknown_tokens = 0;
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
    {
        match SpatialPrimitive::ALL.iter().find(|p| p.name() == token) {
            Some(&p) => primitives.insert(p),
            None if FUNCTION_WORDS.contains(&token.as_str()) => {}
            None => unknown_tokens += 1,
        }
    }
    ParsedCaption {
        primitives,
        unknown_tokens,
    }
}

/// Hard negatives: one seeded-random term flipped to its opposite, and the two
/// object names exchanged with every term kept.
pub fn make_negatives<R: Rng + ?Sized>(
    subject: &str,
    reference: &str,
    relation: &SpatialRelation,
    rng: &mut R,
) -> Result<(String, String)> {
    if subject == reference {
        return Err(Error::InvalidArgument("subject and reference must differ".into()));
    }
    let terms = relation.ordered();
    let target = terms[rng.random_range(0..terms.len())];
    let flipped = relation.with_swapped(target)?;
    Ok((
        render_caption(subject, reference, &flipped),
        render_caption(reference, subject, relation),
    ))
}
