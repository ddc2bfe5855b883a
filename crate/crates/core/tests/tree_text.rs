use std::collections::BTreeMap;

use sspsim::domain::{ComponentToken, SuperPeerId};
use sspsim::dtree::{
    classify, component_attribute_names, format_tree, predict_distribution, ClassCounts, DecisionTree, TreeNode,
};

fn tok(s: &str) -> ComponentToken {
    ComponentToken::parse(s).unwrap()
}

fn leaf(pairs: &[(u32, f64)]) -> TreeNode {
    TreeNode::Leaf { counts: pairs.iter().map(|(k, v)| (SuperPeerId(*k), *v)).collect() }
}

fn internal(attr: usize, branches: Vec<(&str, TreeNode)>) -> TreeNode {
    let branches: BTreeMap<ComponentToken, TreeNode> = branches.into_iter().map(|(v, n)| (tok(v), n)).collect();
    let mut fallback = ClassCounts::new();
    for child in branches.values() {
        for (sp, w) in child.counts() {
            *fallback.entry(*sp).or_insert(0.0) += w;
        }
    }
    TreeNode::Internal { attr, fallback, branches }
}

/// A small reference tree. Errors of impure leaves are parked on
/// a sentinel class so the printed `(n/e)` pairs are reproduced.
fn sample_tree() -> DecisionTree {
    let root = internal(
        0,
        vec![
            ("k.f", internal(1, vec![("g.f", leaf(&[(3, 26.0)])), ("g.h", leaf(&[(0, 15.0)]))])),
            ("p.i", leaf(&[(0, 50.0)])),
            ("f.l", leaf(&[(1, 66.0), (99, 12.0)])),
            (
                "d.o",
                internal(3, vec![("r.m", leaf(&[(3, 22.0), (99, 16.0)])), ("i.c", leaf(&[(3, 25.0)])), ("s.d", leaf(&[(6, 28.0)]))]),
            ),
            ("r.m", leaf(&[(5, 255.0), (99, 138.0)])),
        ],
    );
    DecisionTree { attributes: component_attribute_names(4), root }
}

#[test]
fn text_rendering_matches_reference_lines() {
    let text = format_tree(&sample_tree());
    let lines: Vec<&str> = text.lines().collect();
    for expected in [
        "componentW1 = k.f",
        "| componentW2 = g.f: SP3 (26.0)",
        "| componentW2 = g.h: SP0 (15.0)",
        "componentW1 = p.i: SP0 (50.0)",
        "componentW1 = f.l: SP1 (78.0/12.0)",
        "componentW1 = d.o",
        "| componentW4 = r.m: SP3 (38.0/16.0)",
        "| componentW4 = i.c: SP3 (25.0)",
        "| componentW4 = s.d: SP6 (28.0)",
        "componentW1 = r.m: SP5 (393.0/138.0)",
    ] {
        assert!(lines.contains(&expected), "missing {expected:?} in\n{text}");
    }
    assert_eq!(lines.len(), 10);
    // Children follow their parent line directly.
    let k = lines.iter().position(|l| *l == "componentW1 = k.f").unwrap();
    assert!(lines[k + 1].starts_with("| componentW2 = "));
    assert!(lines[k + 2].starts_with("| componentW2 = "));
}

#[test]
fn predictions_follow_the_branches() {
    let tree = sample_tree();
    let q = |c: [&str; 4]| c.map(tok).to_vec();

    let pure = predict_distribution(&tree, &q(["p.i", "r.m", "m.i", "h.i"])).unwrap();
    assert_eq!(pure.candidates, vec![(SuperPeerId(0), 1.0)]);
    assert_eq!(classify(&tree, &q(["k.f", "g.f", "a.a", "a.a"])).unwrap(), SuperPeerId(3));
    assert_eq!(classify(&tree, &q(["r.m", "a.a", "a.a", "a.a"])).unwrap(), SuperPeerId(5));
    let mixed = predict_distribution(&tree, &q(["r.m", "a.a", "a.a", "a.a"])).unwrap();
    assert!((mixed.candidates[0].1 - 255.0 / 393.0).abs() < 1e-12);

    // Unseen value under d.o uses that node's fallback counts.
    let unseen = predict_distribution(&tree, &q(["d.o", "a.a", "a.a", "zz.z"])).unwrap();
    let total: f64 = unseen.candidates.iter().map(|c| c.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(unseen.top(), Some(SuperPeerId(3)));
}

#[test]
fn json_round_trip_preserves_the_tree() {
    let tree = sample_tree();
    let json = tree.to_json();
    assert!(json.contains("\"kind\": \"internal\""));
    assert!(json.contains("\"kind\": \"leaf\""));
    let back = DecisionTree::from_json(&json).unwrap();
    assert_eq!(back, tree);
    assert_eq!(format_tree(&back), format_tree(&tree));
}

#[test]
fn inconsistent_fallback_is_rejected() {
    let mut tree = sample_tree();
    if let TreeNode::Internal { fallback, .. } = &mut tree.root {
        fallback.insert(SuperPeerId(42), 1.0);
    }
    assert!(DecisionTree::from_json(&tree.to_json()).is_err());
}
