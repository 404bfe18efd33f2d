use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque identifier of a variable block (a pose, a landmark, an observation).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(String);

impl BlockId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlockId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for BlockId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

pub type BlockSet = BTreeSet<BlockId>;

/// Builds a [`BlockSet`] from anything string-like.
pub fn block_set<I, S>(ids: I) -> BlockSet
where
    I: IntoIterator<Item = S>,
    S: Into<BlockId>,
{
    ids.into_iter().map(Into::into).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableBlock {
    pub id: BlockId,
    pub offset: usize,
    pub dim: usize,
}

impl VariableBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.dim
    }
}

/// Ordered, contiguous partition of a flat state vector into named blocks.
#[derive(Debug, Clone)]
pub struct StateLayout {
    blocks: Vec<VariableBlock>,
    index: BTreeMap<BlockId, usize>,
    total_dim: usize,
}

impl PartialEq for StateLayout {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl Eq for StateLayout {}

impl StateLayout {
    pub fn new<I, S>(blocks: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<BlockId>,
    {
        let mut out = Vec::new();
        let mut index = BTreeMap::new();
        let mut offset = 0;
        for (id, dim) in blocks {
            let id = id.into();
            if dim == 0 {
                return Err(Error::InvalidLayout(format!("block `{id}` has zero dimension")));
            }
            if index.insert(id.clone(), out.len()).is_some() {
                return Err(Error::DuplicateBlock(id));
            }
            out.push(VariableBlock { id, offset, dim });
            offset += dim;
        }
        Ok(Self {
            blocks: out,
            index,
            total_dim: offset,
        })
    }

    pub fn blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, id: &BlockId) -> Option<&VariableBlock> {
        self.index.get(id).map(|&i| &self.blocks[i])
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.index.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &BlockId> {
        self.blocks.iter().map(|b| &b.id)
    }

    pub fn id_set(&self) -> BlockSet {
        self.ids().cloned().collect()
    }

    pub fn block(&self, id: &BlockId) -> Result<&VariableBlock> {
        self.get(id).ok_or_else(|| Error::UnknownBlock(id.clone()))
    }

    /// Flat coordinates of `ids`, concatenated in the order given.
    pub fn coordinates_of<'a, I>(&self, ids: I) -> Result<Vec<usize>>
    where
        I: IntoIterator<Item = &'a BlockId>,
    {
        let mut out = Vec::new();
        for id in ids {
            out.extend(self.block(id)?.range());
        }
        Ok(out)
    }

    /// Sub-layout over `keep` (in this layout's block order) and the flat
    /// coordinates it selects.
    pub fn restrict(&self, keep: &BlockSet) -> Result<(StateLayout, Vec<usize>)> {
        if keep.is_empty() {
            return Err(Error::EmptySelection);
        }
        if let Some(missing) = keep.iter().find(|id| !self.contains(id)) {
            return Err(Error::UnknownBlock(missing.clone()));
        }
        let kept: Vec<&VariableBlock> =
            self.blocks.iter().filter(|b| keep.contains(&b.id)).collect();
        let coords = kept.iter().flat_map(|b| b.range()).collect();
        let layout = StateLayout::new(kept.iter().map(|b| (b.id.clone(), b.dim)))?;
        Ok((layout, coords))
    }

    /// Layout of `self` followed by `other`.
    pub fn concat(&self, other: &StateLayout) -> Result<StateLayout> {
        StateLayout::new(
            self.blocks
                .iter()
                .chain(other.blocks.iter())
                .map(|b| (b.id.clone(), b.dim)),
        )
    }

    pub fn with_block(&self, id: BlockId, dim: usize) -> Result<StateLayout> {
        StateLayout::new(
            self.blocks
                .iter()
                .map(|b| (b.id.clone(), b.dim))
                .chain(std::iter::once((id, dim))),
        )
    }
}
