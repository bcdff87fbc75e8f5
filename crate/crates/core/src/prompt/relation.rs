use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialPrimitive {
    Left,
    Right,
    Front,
    Behind,
    Above,
    Below,
}

impl SpatialPrimitive {
    pub const ALL: [SpatialPrimitive; 6] = [
        SpatialPrimitive::Left,
        SpatialPrimitive::Right,
        SpatialPrimitive::Front,
        SpatialPrimitive::Behind,
        SpatialPrimitive::Above,
        SpatialPrimitive::Below,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Self {
        use SpatialPrimitive::*;
        match self {
            Left => Right,
            Right => Left,
            Front => Behind,
            Behind => Front,
            Above => Below,
            Below => Above,
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, SpatialPrimitive::Above | SpatialPrimitive::Below)
    }

    pub fn is_depth(self) -> bool {
        matches!(self, SpatialPrimitive::Front | SpatialPrimitive::Behind)
    }

    pub fn name(self) -> &'static str {
        use SpatialPrimitive::*;
        match self {
            Left => "left",
            Right => "right",
            Front => "front",
            Behind => "behind",
            Above => "above",
            Below => "below",
        }
    }

    /// Phrase used inside captions.
    pub fn phrase(self) -> &'static str {
        use SpatialPrimitive::*;
        match self {
            Left => "to the left of",
            Right => "to the right of",
            Front => "in front of",
            Behind => "behind",
            Above => "above",
            Below => "below",
        }
    }

    /// Caption ordering: vertical, then depth, then lateral.
    fn caption_rank(self) -> u8 {
        if self.is_vertical() {
            0
        } else if self.is_depth() {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for SpatialPrimitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unordered set of primitives; may hold anything, including opposite pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PrimitiveSet(u8);

impl PrimitiveSet {
    pub const EMPTY: PrimitiveSet = PrimitiveSet(0);

    pub fn from_bits(bits: u8) -> Self {
        PrimitiveSet(bits & 0b11_1111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn insert(&mut self, p: SpatialPrimitive) {
        self.0 |= 1 << p.index();
    }

    pub fn with(mut self, p: SpatialPrimitive) -> Self {
        self.insert(p);
        self
    }

    pub fn contains(self, p: SpatialPrimitive) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: PrimitiveSet) -> PrimitiveSet {
        PrimitiveSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = SpatialPrimitive> {
        SpatialPrimitive::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn has_opposite_pair(self) -> bool {
        self.iter().any(|p| self.contains(p.opposite()))
    }
}

impl FromIterator<SpatialPrimitive> for PrimitiveSet {
    fn from_iter<I: IntoIterator<Item = SpatialPrimitive>>(iter: I) -> Self {
        let mut set = PrimitiveSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

/// A well-formed relation between two objects: up to two horizontal
/// primitives (never an opposite pair) plus an optional vertical one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRelation", into = "RawRelation")]
pub struct SpatialRelation {
    horizontal: Vec<SpatialPrimitive>,
    vertical: Option<SpatialPrimitive>,
}

#[derive(Serialize, Deserialize)]
struct RawRelation {
    horizontal: Vec<SpatialPrimitive>,
    vertical: Option<SpatialPrimitive>,
}

impl TryFrom<RawRelation> for SpatialRelation {
    type Error = Error;

    fn try_from(raw: RawRelation) -> Result<Self> {
        SpatialRelation::new(&raw.horizontal, raw.vertical)
    }
}

impl From<SpatialRelation> for RawRelation {
    fn from(r: SpatialRelation) -> Self {
        RawRelation {
            horizontal: r.horizontal,
            vertical: r.vertical,
        }
    }
}

impl SpatialRelation {
    pub fn new(horizontal: &[SpatialPrimitive], vertical: Option<SpatialPrimitive>) -> Result<Self> {
        let invalid = |msg: &str| Err(Error::InvalidRelation(msg.to_string()));
        if horizontal.len() > 2 {
            return invalid("more than two horizontal primitives");
        }
        if horizontal.iter().any(|p| p.is_vertical()) {
            return invalid("vertical primitive in horizontal set");
        }
        if vertical.is_some_and(|v| !v.is_vertical()) {
            return invalid("horizontal primitive in vertical slot");
        }
        let set: PrimitiveSet = horizontal.iter().copied().collect();
        if set.len() != horizontal.len() {
            return invalid("repeated horizontal primitive");
        }
        if set.has_opposite_pair() {
            return invalid("opposite horizontal primitives");
        }
        if horizontal.is_empty() && vertical.is_none() {
            return Err(Error::EmptyRelation);
        }
        let mut horizontal = horizontal.to_vec();
        horizontal.sort_by_key(|p| (p.caption_rank(), p.index()));
        Ok(SpatialRelation { horizontal, vertical })
    }

    pub fn from_primitives(set: PrimitiveSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyRelation);
        }
        let vertical: Vec<_> = set.iter().filter(|p| p.is_vertical()).collect();
        if vertical.len() > 1 {
            return Err(Error::InvalidRelation("both above and below".into()));
        }
        let horizontal: Vec<_> = set.iter().filter(|p| !p.is_vertical()).collect();
        Self::new(&horizontal, vertical.first().copied())
    }

    pub fn horizontal(&self) -> &[SpatialPrimitive] {
        &self.horizontal
    }

    pub fn vertical(&self) -> Option<SpatialPrimitive> {
        self.vertical
    }

    pub fn complexity(&self) -> usize {
        self.horizontal.len() + usize::from(self.vertical.is_some())
    }

    pub fn primitives(&self) -> PrimitiveSet {
        self.horizontal.iter().copied().chain(self.vertical).collect()
    }

    /// Primitives in caption order.
    pub fn ordered(&self) -> Vec<SpatialPrimitive> {
        self.vertical
            .into_iter()
            .chain(self.horizontal.iter().copied())
            .collect()
    }

    /// The same relation with `target` replaced by its opposite.
    pub fn with_swapped(&self, target: SpatialPrimitive) -> Result<Self> {
        let mut set = PrimitiveSet::EMPTY;
        let mut found = false;
        for p in self.primitives().iter() {
            if p == target {
                set.insert(p.opposite());
                found = true;
            } else {
                set.insert(p);
            }
        }
        if !found {
            return Err(Error::InvalidRelation(format!("{target} is not part of the relation")));
        }
        Self::from_primitives(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SpatialPrimitive::*;

    #[test]
    fn opposites_are_involutive() {
        for p in SpatialPrimitive::ALL {
            assert_ne!(p, p.opposite());
            assert_eq!(p, p.opposite().opposite());
        }
    }

    #[test]
    fn invariants_enforced() {
        assert!(SpatialRelation::new(&[Left, Right], None).is_err());
        assert!(SpatialRelation::new(&[Left, Behind, Front], None).is_err());
        assert!(SpatialRelation::new(&[Above], None).is_err());
        assert!(matches!(SpatialRelation::new(&[], None), Err(Error::EmptyRelation)));
        let r = SpatialRelation::new(&[Left, Behind], Some(Above)).unwrap();
        assert_eq!(r.complexity(), 3);
        assert_eq!(r.ordered(), vec![Above, Behind, Left]);
    }

    #[test]
    fn serde_shape() {
        let r = SpatialRelation::new(&[Left, Behind], Some(Above)).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(text, r#"{"horizontal":["behind","left"],"vertical":"above"}"#);
        let r: SpatialRelation = serde_json::from_str(r#"{"horizontal":[],"vertical":"below"}"#).unwrap();
        assert_eq!(r.complexity(), 1);
        assert!(serde_json::from_str::<SpatialRelation>(r#"{"horizontal":["left","right"],"vertical":null}"#).is_err());
    }

    #[test]
    fn swap_replaces_exactly_one_term() {
        let r = SpatialRelation::new(&[Left, Behind], Some(Above)).unwrap();
        let s = r.with_swapped(Left).unwrap();
        assert_eq!(s.primitives(), PrimitiveSet::EMPTY.with(Right).with(Behind).with(Above));
        assert!(r.with_swapped(Front).is_err());
    }
}
