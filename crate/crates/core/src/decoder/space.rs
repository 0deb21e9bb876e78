//! Prefix store shared by the fast and slow searches.
//!
//! Every distinct token prefix is a node of a trie. The predictor output for
//! a node is computed on first use and reused afterwards, so a prefix is
//! evaluated at most once per decode session no matter which search asks.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use super::model::JointModel;
use crate::error::{Error, Result};
use crate::transducer::TokenId;

static NEXT_SPACE_ID: AtomicU64 = AtomicU64::new(1);

/// Reference to a prefix node inside one [`SearchSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeHandle {
    space: u64,
    node: usize,
}

impl NodeHandle {
    /// Handle that belongs to no space; only useful in tests.
    pub fn detached() -> Self {
        Self { space: 0, node: 0 }
    }

    pub fn space(&self) -> u64 {
        self.space
    }

    pub fn node(&self) -> usize {
        self.node
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SpaceCounters {
    pub predictor_evals: u64,
    pub joiner_evals: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

struct Node<S> {
    parent: Option<usize>,
    token: Option<TokenId>,
    prediction: Option<(Vec<f32>, S)>,
}

pub struct SearchSpace<S> {
    id: u64,
    nodes: Vec<Node<S>>,
    children: HashMap<(usize, TokenId), usize>,
    counters: SpaceCounters,
}

impl<S: Clone> SearchSpace<S> {
    pub fn new() -> Self {
        Self {
            id: NEXT_SPACE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: vec![Node {
                parent: None,
                token: None,
                prediction: None,
            }],
            children: HashMap::new(),
            counters: SpaceCounters::default(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn root(&self) -> NodeHandle {
        NodeHandle { space: self.id, node: 0 }
    }

    pub fn counters(&self) -> SpaceCounters {
        self.counters
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub(crate) fn count_joiner_eval(&mut self) {
        self.counters.joiner_evals += 1;
    }

    pub fn check(&self, handle: NodeHandle) -> Result<()> {
        if handle.space != self.id || handle.node >= self.nodes.len() {
            return Err(Error::CrossSpaceHandle {
                handle_space: handle.space,
                space: self.id,
            });
        }
        Ok(())
    }

    /// Node for `parent + token`, created (unevaluated) if new.
    pub fn child(&mut self, parent: NodeHandle, token: TokenId) -> Result<NodeHandle> {
        self.check(parent)?;
        let id = match self.children.get(&(parent.node, token)) {
            Some(&c) => c,
            None => {
                let c = self.nodes.len();
                self.nodes.push(Node {
                    parent: Some(parent.node),
                    token: Some(token),
                    prediction: None,
                });
                self.children.insert((parent.node, token), c);
                c
            }
        };
        Ok(NodeHandle { space: self.id, node: id })
    }

    /// Node for a full token sequence, walking from the root.
    pub fn lookup_or_insert(&mut self, tokens: &[TokenId]) -> NodeHandle {
        let mut h = self.root();
        for &t in tokens {
            h = self.child(h, t).expect("handle from this space");
        }
        h
    }

    pub fn tokens(&self, handle: NodeHandle) -> Result<Vec<TokenId>> {
        self.check(handle)?;
        let mut out = Vec::new();
        let mut n = handle.node;
        while let Some(t) = self.nodes[n].token {
            out.push(t);
            n = self.nodes[n].parent.expect("non-root has parent");
        }
        out.reverse();
        Ok(out)
    }

    /// Predictor output for the prefix at `handle`, evaluating it (and any
    /// unevaluated ancestors) on first use.
    pub fn prediction<M: JointModel<State = S>>(&mut self, handle: NodeHandle, model: &M) -> Result<Vec<f32>> {
        self.check(handle)?;
        if let Some((out, _)) = &self.nodes[handle.node].prediction {
            self.counters.cache_hits += 1;
            return Ok(out.clone());
        }
        self.counters.cache_misses += 1;
        // walk up to the nearest evaluated ancestor (or the root)
        let mut chain = vec![handle.node];
        let mut n = handle.node;
        while let Some(p) = self.nodes[n].parent {
            if self.nodes[p].prediction.is_some() {
                break;
            }
            chain.push(p);
            n = p;
        }
        for &node in chain.iter().rev() {
            let parent_state = match self.nodes[node].parent {
                Some(p) => self.nodes[p].prediction.as_ref().expect("evaluated above").1.clone(),
                None => model.start_state(),
            };
            let result = model.predict(self.nodes[node].token, &parent_state)?;
            self.counters.predictor_evals += 1;
            self.nodes[node].prediction = Some(result);
        }
        Ok(self.nodes[handle.node].prediction.as_ref().expect("just set").0.clone())
    }
}

impl<S: Clone> Default for SearchSpace<S> {
    fn default() -> Self {
        Self::new()
    }
}
