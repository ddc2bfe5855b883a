//! Overlay generation and membership changes.
//!
//! A topology has `S` themes, one Super-Peer per theme, and peers assigned
//! round-robin to Super-Peers. Each peer's expertise is sampled from its
//! theme's vocabulary. Theme vocabularies share a common prefix of
//! `floor(vocab_overlap * V)` tokens; the remainder is private to the theme.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ComponentToken, Expertise, PeerId, SuperPeerId};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("invalid topology config: {0}")]
    InvalidConfig(String),
    #[error("theme index {index} out of range (topology has {themes} themes)")]
    InvalidTheme { index: usize, themes: usize },
    #[error("unknown peer {0}")]
    UnknownPeer(PeerId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub num_themes: usize,
    pub num_peers: usize,
    pub vocab_size: usize,
    pub expertise_size: usize,
    pub vocab_overlap: f64,
    pub seed: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self { num_themes: 10, num_peers: 500, vocab_size: 20, expertise_size: 8, vocab_overlap: 0.0, seed: 7 }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let fail = |msg: String| Err(TopologyError::InvalidConfig(msg));
        if self.num_themes == 0 {
            return fail("num_themes must be positive".into());
        }
        if self.num_peers < self.num_themes {
            return fail(format!("num_peers ({}) must be >= num_themes ({})", self.num_peers, self.num_themes));
        }
        if self.vocab_size == 0 || self.expertise_size == 0 {
            return fail("vocab_size and expertise_size must be positive".into());
        }
        if self.expertise_size > self.vocab_size {
            return fail(format!(
                "expertise_size ({}) exceeds vocab_size ({})",
                self.expertise_size, self.vocab_size
            ));
        }
        if !(0.0..1.0).contains(&self.vocab_overlap) {
            return fail(format!("vocab_overlap must lie in [0, 1), got {}", self.vocab_overlap));
        }
        Ok(())
    }

    fn shared_tokens(&self) -> usize {
        (self.vocab_overlap * self.vocab_size as f64).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub name: String,
    pub vocabulary: Vec<ComponentToken>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerNode {
    pub id: PeerId,
    pub expertise: Expertise,
    pub home: SuperPeerId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperPeerNode {
    pub id: SuperPeerId,
    pub theme: Theme,
    pub members: Vec<PeerId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub config: TopologyConfig,
    pub ssp_present: bool,
    /// High-water mark for peer indices; joins never reuse an index.
    pub next_peer_index: u32,
    pub super_peers: Vec<SuperPeerNode>,
    pub peers: BTreeMap<PeerId, PeerNode>,
}

impl Topology {
    pub fn num_super_peers(&self) -> usize {
        self.super_peers.len()
    }

    pub fn num_peers(&self) -> usize {
        self.peers.len()
    }

    /// Super-Peer ids are dense, so `SP<i>` lives at index `i`.
    pub fn super_peer(&self, id: SuperPeerId) -> Option<&SuperPeerNode> {
        self.super_peers.get(id.index() as usize).filter(|sp| sp.id == id)
    }

    pub fn peer(&self, id: PeerId) -> Option<&PeerNode> {
        self.peers.get(&id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Member lists partition the peer set and every member points home.
    pub fn check_partition(&self) -> bool {
        let mut seen = 0usize;
        for sp in &self.super_peers {
            for m in &sp.members {
                match self.peers.get(m) {
                    Some(p) if p.home == sp.id => seen += 1,
                    _ => return false,
                }
            }
        }
        seen == self.peers.len()
    }
}

/// Canonical token enumeration: the right side cycles through `a..z`, the
/// left side counts in bijective base 26 (`a`, .., `z`, `aa`, ..).
fn nth_token(i: usize) -> ComponentToken {
    let right = (b'a' + (i % 26) as u8) as char;
    let mut n = i / 26 + 1;
    let mut left = Vec::new();
    while n > 0 {
        n -= 1;
        left.push(b'a' + (n % 26) as u8);
        n /= 26;
    }
    left.reverse();
    let text = format!("{}.{}", String::from_utf8(left).expect("ascii"), right);
    ComponentToken::parse(&text).expect("generated token matches grammar")
}

fn sample_expertise<R: Rng>(rng: &mut R, vocabulary: &[ComponentToken], size: usize) -> Expertise {
    let tokens = index::sample(rng, vocabulary.len(), size).into_iter().map(|i| vocabulary[i].clone()).collect();
    Expertise::new(tokens).expect("sampling without replacement yields distinct tokens")
}

pub fn generate_topology(cfg: &TopologyConfig) -> Result<Topology, TopologyError> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, "topology");

    let shared = cfg.shared_tokens();
    let private = cfg.vocab_size - shared;
    let needed = shared + cfg.num_themes * private;
    // Draw from at least the two-letter space so small runs look like `p.r`.
    let mut pool: Vec<ComponentToken> = (0..needed.max(26 * 26)).map(nth_token).collect();
    pool.shuffle(&mut rng);
    pool.truncate(needed);

    let (shared_part, private_part) = pool.split_at(shared);
    let mut super_peers: Vec<SuperPeerNode> = (0..cfg.num_themes)
        .map(|t| {
            let mut vocabulary = shared_part.to_vec();
            vocabulary.extend_from_slice(&private_part[t * private..(t + 1) * private]);
            SuperPeerNode {
                id: SuperPeerId(t as u32),
                theme: Theme { name: format!("theme{t}"), vocabulary },
                members: Vec::new(),
            }
        })
        .collect();

    let mut peers = BTreeMap::new();
    for i in 0..cfg.num_peers {
        let sp = &mut super_peers[i % cfg.num_themes];
        let id = PeerId(i as u32);
        let expertise = sample_expertise(&mut rng, &sp.theme.vocabulary, cfg.expertise_size);
        sp.members.push(id);
        peers.insert(id, PeerNode { id, expertise, home: sp.id });
    }

    Ok(Topology {
        config: cfg.clone(),
        ssp_present: true,
        next_peer_index: cfg.num_peers as u32,
        super_peers,
        peers,
    })
}

pub fn peer_join(topology: &Topology, theme_index: usize, seed: u64) -> Result<(Topology, PeerId), TopologyError> {
    if theme_index >= topology.super_peers.len() {
        return Err(TopologyError::InvalidTheme { index: theme_index, themes: topology.super_peers.len() });
    }
    let max_existing = topology.peers.keys().next_back().map_or(0, |p| p.index() + 1);
    let id = PeerId(topology.next_peer_index.max(max_existing));

    let mut next = topology.clone();
    let sp = &mut next.super_peers[theme_index];
    let size = topology.config.expertise_size.min(sp.theme.vocabulary.len());
    let mut rng = rng::stream(seed, &format!("join/{id}"));
    let expertise = sample_expertise(&mut rng, &sp.theme.vocabulary, size);
    sp.members.push(id);
    let home = sp.id;
    next.peers.insert(id, PeerNode { id, expertise, home });
    next.next_peer_index = id.index() + 1;
    Ok((next, id))
}

pub fn peer_leave(topology: &Topology, peer: PeerId) -> Result<Topology, TopologyError> {
    let node = topology.peers.get(&peer).ok_or(TopologyError::UnknownPeer(peer))?;
    let mut next = topology.clone();
    next.peers.remove(&peer);
    if let Some(sp) = next.super_peers.get_mut(node.home.index() as usize) {
        sp.members.retain(|m| *m != peer);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn small(num_themes: usize, num_peers: usize) -> TopologyConfig {
        TopologyConfig { num_themes, num_peers, ..TopologyConfig::default() }
    }

    #[test]
    fn default_shape_and_disjoint_themes() {
        let topo = generate_topology(&TopologyConfig::default()).unwrap();
        assert_eq!(topo.num_super_peers(), 10);
        assert!(topo.super_peers.iter().all(|sp| sp.members.len() == 50));
        assert!(topo.check_partition());
        for a in topo.peers.values() {
            assert_eq!(a.expertise.len(), 8);
            let vocab = &topo.super_peer(a.home).unwrap().theme.vocabulary;
            assert!(a.expertise.tokens().iter().all(|t| vocab.contains(t)));
            for b in topo.peers.values().filter(|b| b.home != a.home).take(20) {
                assert!(a.expertise.tokens().iter().all(|t| !b.expertise.contains(t)));
            }
        }
    }

    #[test]
    fn overlap_shares_a_prefix() {
        let cfg = TopologyConfig { vocab_overlap: 0.25, ..small(3, 30) };
        let topo = generate_topology(&cfg).unwrap();
        let v0: HashSet<_> = topo.super_peers[0].theme.vocabulary.iter().collect();
        let v1: HashSet<_> = topo.super_peers[1].theme.vocabulary.iter().collect();
        assert_eq!(v0.intersection(&v1).count(), 5);
        assert_eq!(topo.super_peers[0].theme.vocabulary[..5], topo.super_peers[2].theme.vocabulary[..5]);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = TopologyConfig::default();
        assert_eq!(generate_topology(&cfg).unwrap().to_json(), generate_topology(&cfg).unwrap().to_json());
        let other = TopologyConfig { seed: 8, ..cfg };
        assert_ne!(generate_topology(&other).unwrap().to_json(), generate_topology(&TopologyConfig::default()).unwrap().to_json());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TopologyConfig { expertise_size: 21, ..TopologyConfig::default() },
            TopologyConfig { num_themes: 0, ..TopologyConfig::default() },
            TopologyConfig { num_peers: 5, ..TopologyConfig::default() },
            TopologyConfig { vocab_overlap: 1.0, ..TopologyConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate_topology(&cfg), Err(TopologyError::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn large_vocabularies_extend_the_alphabet() {
        let cfg = TopologyConfig { num_themes: 40, num_peers: 40, vocab_size: 30, ..TopologyConfig::default() };
        let topo = generate_topology(&cfg).unwrap();
        let all: HashSet<_> = topo.super_peers.iter().flat_map(|sp| sp.theme.vocabulary.iter()).collect();
        assert_eq!(all.len(), 1200);
    }

    #[test]
    fn json_round_trip() {
        let topo = generate_topology(&small(3, 9)).unwrap();
        let back = Topology::from_json(&topo.to_json()).unwrap();
        assert_eq!(back, topo);
    }

    #[test]
    fn join_and_leave() {
        let topo = generate_topology(&small(2, 2)).unwrap();
        let (joined, id) = peer_join(&topo, 0, 1).unwrap();
        assert_eq!(joined.num_peers(), 3);
        assert_eq!(id, PeerId(2));
        assert_eq!(joined.peer(id).unwrap().home, SuperPeerId(0));
        assert!(joined.check_partition());

        let left = peer_leave(&joined, id).unwrap();
        assert_eq!(left.num_peers(), 2);
        // Removed index is not handed out again.
        let (_, again) = peer_join(&left, 1, 1).unwrap();
        assert_eq!(again, PeerId(3));

        assert!(matches!(peer_join(&topo, 2, 0), Err(TopologyError::InvalidTheme { .. })));
    }

    #[test]
    fn leave_errors_and_empty_super_peers() {
        let topo = generate_topology(&small(2, 4)).unwrap();
        let t1 = peer_leave(&topo, PeerId(0)).unwrap();
        assert!(t1.peer(PeerId(0)).is_none());
        assert!(!t1.super_peers[0].members.contains(&PeerId(0)));
        assert_eq!(peer_leave(&t1, PeerId(0)), Err(TopologyError::UnknownPeer(PeerId(0))));

        let emptied = peer_leave(&t1, PeerId(2)).unwrap();
        assert_eq!(emptied.num_super_peers(), 2);
        assert!(emptied.super_peers[0].members.is_empty());
        assert!(emptied.check_partition());
    }

    #[test]
    fn nth_token_is_injective() {
        let toks: HashSet<_> = (0..5000).map(nth_token).collect();
        assert_eq!(toks.len(), 5000);
        assert_eq!(nth_token(0).as_str(), "a.a");
        assert_eq!(nth_token(26 * 26).as_str(), "aa.a");
    }

    proptest! {
        #[test]
        fn partition_survives_mutation(ops in prop::collection::vec((any::<bool>(), 0usize..4, 0u32..40), 0..30)) {
            let mut topo = generate_topology(&small(4, 12)).unwrap();
            for (join, theme, pick) in ops {
                if join {
                    topo = peer_join(&topo, theme, u64::from(pick)).unwrap().0;
                } else if let Some(id) = topo.peers.keys().nth(pick as usize % topo.peers.len().max(1)).copied() {
                    topo = peer_leave(&topo, id).unwrap();
                }
                prop_assert!(topo.check_partition());
            }
        }
    }
}
