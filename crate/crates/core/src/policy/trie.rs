use std::collections::BTreeMap;

use crate::corpus::{Text, TokenId};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrieNode {
    pub children: BTreeMap<TokenId, usize>,
    pub terminal: bool,
}

/// Prefix tree over an inventory of token sequences. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Trie {
    pub nodes: Vec<TrieNode>,
}

impl Trie {
    pub fn root(&self) -> usize {
        0
    }

    pub fn child(&self, node: usize, token: TokenId) -> Option<usize> {
        self.nodes[node].children.get(&token).copied()
    }

    pub fn walk(&self, tokens: &[TokenId]) -> Option<usize> {
        tokens.iter().try_fold(self.root(), |n, &t| self.child(n, t))
    }

    pub fn contains(&self, tokens: &[TokenId]) -> bool {
        self.walk(tokens).is_some_and(|n| self.nodes[n].terminal)
    }

    /// Every root-to-terminal path, in token order.
    pub fn paths(&self) -> Vec<Text> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root(), Vec::new())];
        while let Some((n, path)) = stack.pop() {
            if self.nodes[n].terminal {
                out.push(path.clone());
            }
            for (&t, &c) in self.nodes[n].children.iter().rev() {
                let mut p = path.clone();
                p.push(t);
                stack.push((c, p));
            }
        }
        out
    }
}

pub fn build_trie<'a>(bidwords: impl IntoIterator<Item = &'a Text>) -> Result<Trie> {
    let mut trie = Trie { nodes: vec![TrieNode::default()] };
    let mut any = false;
    for b in bidwords {
        any = true;
        let mut n = 0;
        for &t in b {
            n = match trie.nodes[n].children.get(&t) {
                Some(&c) => c,
                None => {
                    trie.nodes.push(TrieNode::default());
                    let c = trie.nodes.len() - 1;
                    trie.nodes[n].children.insert(t, c);
                    c
                }
            };
        }
        trie.nodes[n].terminal = true;
    }
    if !any {
        return Err(Error::Precondition("cannot build a trie from an empty inventory".into()));
    }
    Ok(trie)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn paths_equal_the_inventory(words in prop::collection::btree_set(prop::collection::vec(4u32..9, 1..4), 1..20)) {
            let inv: Vec<Text> = words.into_iter().collect();
            let trie = build_trie(&inv).unwrap();
            let mut paths = trie.paths();
            paths.sort();
            prop_assert_eq!(&paths, &inv);
            for w in &inv {
                prop_assert!(trie.contains(w));
            }
        }
    }

    #[test]
    fn prefixes_are_not_members() {
        let trie = build_trie(&[vec![4, 5, 6]]).unwrap();
        assert!(!trie.contains(&[4, 5]));
        assert!(!trie.contains(&[]));
        assert!(trie.contains(&[4, 5, 6]));
    }
}
