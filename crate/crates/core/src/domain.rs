//! Core vocabulary: component tokens, node and query identifiers, expertise,
//! queries, and the relevance predicate that decides whether a peer can answer
//! a query.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("malformed component token {0:?}")]
    MalformedToken(String),
    #[error("malformed {kind} identifier {text:?}")]
    MalformedId { kind: &'static str, text: String },
    #[error("duplicate token {0} in expertise")]
    DuplicateToken(String),
    #[error("relevance threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Atomic query/expertise element of the form `left.right`, both sides
/// lowercase ASCII letters. Cloning is a reference-count bump.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentToken(Arc<str>);

impl ComponentToken {
    pub fn parse(text: &str) -> Result<Self, DomainError> {
        let malformed = || DomainError::MalformedToken(text.to_string());
        let (left, right) = text.split_once('.').ok_or_else(malformed)?;
        let side_ok = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase());
        if side_ok(left) && side_ok(right) {
            Ok(Self(Arc::from(text)))
        } else {
            Err(malformed())
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ComponentToken {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for ComponentToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ComponentToken {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

macro_rules! prefixed_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal, $kind:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> u32 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }

        impl FromStr for $name {
            type Err = DomainError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let bad = || DomainError::MalformedId { kind: $kind, text: s.to_string() };
                let digits = s.strip_prefix($prefix).ok_or_else(bad)?;
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(bad());
                }
                digits.parse().map(Self).map_err(|_| bad())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

prefixed_id!(
    /// `P<n>`; ordered by index.
    PeerId, "P", "peer"
);
prefixed_id!(
    /// `SP<n>`; ordered by index.
    SuperPeerId, "SP", "super-peer"
);
prefixed_id!(
    /// `Q<n>`; ordered by index.
    QueryId, "Q", "query"
);

/// The tokens describing the data a peer holds, in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Expertise {
    tokens: Vec<ComponentToken>,
}

impl Expertise {
    pub fn new(tokens: Vec<ComponentToken>) -> Result<Self, DomainError> {
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].contains(t) {
                return Err(DomainError::DuplicateToken(t.to_string()));
            }
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[ComponentToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &ComponentToken) -> bool {
        self.tokens.contains(token)
    }
}

impl<'de> Deserialize<'de> for Expertise {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<ComponentToken>::deserialize(d)?;
        Self::new(tokens).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: QueryId,
    pub components: Vec<ComponentToken>,
    pub origin: PeerId,
}

impl Query {
    pub fn arity(&self) -> usize {
        self.components.len()
    }
}

/// Minimum fraction of a query's components a peer's expertise must contain.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct RelevanceThreshold(f64);

impl RelevanceThreshold {
    pub fn new(theta: f64) -> Result<Self, DomainError> {
        if theta > 0.0 && theta <= 1.0 {
            Ok(Self(theta))
        } else {
            Err(DomainError::InvalidThreshold(theta))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for RelevanceThreshold {
    fn default() -> Self {
        Self(0.5)
    }
}

impl<'de> Deserialize<'de> for RelevanceThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Self::new(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub fn parse_component_token(text: &str) -> Result<ComponentToken, DomainError> {
    ComponentToken::parse(text)
}

/// A peer is relevant when `|expertise ∩ components| / arity >= theta`.
pub fn is_relevant(expertise: &Expertise, query: &Query, theta: RelevanceThreshold) -> bool {
    let hits = query.components.iter().filter(|c| expertise.contains(c)).count();
    meets_threshold(hits, query.arity(), theta)
}

pub(crate) fn meets_threshold(hits: usize, arity: usize, theta: RelevanceThreshold) -> bool {
    arity > 0 && hits as f64 / arity as f64 >= theta.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(s: &str) -> ComponentToken {
        ComponentToken::parse(s).unwrap()
    }

    fn expertise(tokens: &[&str]) -> Expertise {
        Expertise::new(tokens.iter().map(|t| tok(t)).collect()).unwrap()
    }

    fn query(tokens: &[&str]) -> Query {
        Query { id: QueryId(10), components: tokens.iter().map(|t| tok(t)).collect(), origin: PeerId(0) }
    }

    #[test]
    fn token_grammar() {
        assert_eq!(parse_component_token("p.r").unwrap().as_str(), "p.r");
        assert_eq!(parse_component_token("ab.xyz").unwrap().as_str(), "ab.xyz");
        for bad in ["", "P.R", "p.", ".r", "pr", "p.r.s", "p .r", " p.r", "p-r", "p.1"] {
            assert!(
                matches!(parse_component_token(bad), Err(DomainError::MalformedToken(_))),
                "{bad:?} accepted"
            );
        }
    }

    #[test]
    fn ids_round_trip_through_text() {
        assert_eq!("P114".parse::<PeerId>().unwrap(), PeerId(114));
        assert_eq!(SuperPeerId(5).to_string(), "SP5");
        assert_eq!("Q10".parse::<QueryId>().unwrap(), QueryId(10));
        assert!("SP".parse::<SuperPeerId>().is_err());
        assert!("P-1".parse::<PeerId>().is_err());
        assert!("SP5".parse::<PeerId>().is_err());
        assert!(SuperPeerId(2) < SuperPeerId(10));
    }

    #[test]
    fn expertise_rejects_duplicates() {
        assert!(Expertise::new(vec![tok("a.b"), tok("a.b")]).is_err());
    }

    #[test]
    fn relevance_examples() {
        let theta_half = RelevanceThreshold::new(0.5).unwrap();
        let full = RelevanceThreshold::new(1.0).unwrap();
        let e = expertise(&["p.r", "r.m", "m.i", "h.i", "k.f"]);
        assert!(is_relevant(&e, &query(&["p.r", "r.m", "m.i", "h.i"]), full));
        assert!(is_relevant(&e, &query(&["p.r", "r.m", "x.x", "y.y"]), theta_half));
        assert!(!is_relevant(&e, &query(&["p.r", "z.z", "x.x", "y.y"]), theta_half));
    }

    #[test]
    fn threshold_bounds() {
        assert!(RelevanceThreshold::new(0.0).is_err());
        assert!(RelevanceThreshold::new(1.01).is_err());
        assert!(RelevanceThreshold::new(f64::NAN).is_err());
        assert_eq!(RelevanceThreshold::default().value(), 0.5);
    }

    fn token_strategy() -> impl Strategy<Value = String> {
        ("[a-z]{1,3}", "[a-z]{1,3}").prop_map(|(l, r)| format!("{l}.{r}"))
    }

    proptest! {
        #[test]
        fn accepted_tokens_round_trip(text in token_strategy()) {
            let token = parse_component_token(&text).unwrap();
            prop_assert_eq!(token.as_str(), text.as_str());
        }

        #[test]
        fn full_threshold_means_containment(
            pool in prop::collection::btree_set(token_strategy(), 6..12),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 4),
            keep in 0usize..12,
        ) {
            let pool: Vec<ComponentToken> = pool.iter().map(|t| tok(t)).collect();
            let e = Expertise::new(pool[..keep.min(pool.len())].to_vec()).unwrap();
            let mut comps: Vec<ComponentToken> = Vec::new();
            for p in &picks {
                let t = p.get(&pool).clone();
                if !comps.contains(&t) { comps.push(t); }
            }
            let q = Query { id: QueryId(0), components: comps.clone(), origin: PeerId(0) };
            let subset = comps.iter().all(|c| e.contains(c));
            prop_assert_eq!(is_relevant(&e, &q, RelevanceThreshold::new(1.0).unwrap()), subset);
        }

        #[test]
        fn relevance_monotone_in_overlap(
            pool in prop::collection::btree_set(token_strategy(), 8..12),
            theta in 0.05f64..=1.0,
        ) {
            let pool: Vec<ComponentToken> = pool.iter().map(|t| tok(t)).collect();
            let theta = RelevanceThreshold::new(theta).unwrap();
            let e = Expertise::new(pool[..4].to_vec()).unwrap();
            // Replace a non-expertise component with an expertise one.
            let before = Query { id: QueryId(0), components: vec![pool[0].clone(), pool[5].clone(), pool[6].clone()], origin: PeerId(0) };
            let after = Query { id: QueryId(0), components: vec![pool[0].clone(), pool[1].clone(), pool[6].clone()], origin: PeerId(0) };
            if is_relevant(&e, &before, theta) {
                prop_assert!(is_relevant(&e, &after, theta));
            }
        }
    }
}
