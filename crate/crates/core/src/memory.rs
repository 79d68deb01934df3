//! Block-structured memory.
//!
//! A memory is a sequence of blocks indexed by [`BlockId`]. Each block has
//! bounds `[lo, hi)` and one cell per byte offset. A store of chunk `ch`
//! writes `ch.size()` consecutive cells that all remember the stored value,
//! the chunk, and their position inside the chunk; a load only gives back
//! the value when it reads exactly such a run with the same chunk.
//! Everything else in a valid range reads as `Undef`.
//!
//! Blocks are reference counted so that cloning a `Memory` (which the
//! interpreter does on every step) only copies the block table.

use std::sync::Arc;

use thiserror::Error;

use crate::values::{BlockId, Chunk, Value};

/// Largest block the allocator hands out, in bytes.
pub const MAX_BLOCK_SIZE: i64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemCell {
    Uninit,
    Datum { index: u8, value: Value, chunk: Chunk },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    lo: i64,
    hi: i64,
    cells: Vec<MemCell>,
    live: bool,
}

impl Block {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    pub fn cell(&self, ofs: i64) -> Option<&MemCell> {
        if ofs < self.lo || ofs >= self.hi {
            return None;
        }
        self.cells.get((ofs - self.lo) as usize)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemError {
    #[error("bad bounds [{lo}, {hi})")]
    BadBounds { lo: i64, hi: i64 },
    #[error("block of {0} bytes exceeds the allocation limit")]
    TooLarge(i64),
    #[error("double free of {0}")]
    DoubleFree(BlockId),
}

/// Why an address is not usable for a given chunk.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum AccessError {
    #[error("address is not a pointer")]
    NotAPointer,
    #[error("unknown block")]
    UnknownBlock,
    #[error("block has been freed")]
    DeadBlock,
    #[error("access out of bounds")]
    OutOfBounds,
    #[error("misaligned access")]
    Misaligned,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Memory {
    blocks: Vec<Arc<Block>>,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    /// The id the next allocation will return.
    pub fn next_block(&self) -> BlockId {
        BlockId(self.blocks.len() as u32)
    }

    pub fn block(&self, b: BlockId) -> Option<&Block> {
        self.blocks.get(b.0 as usize).map(|b| &**b)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (BlockId, &Block)> {
        self.blocks.iter().enumerate().map(|(i, b)| (BlockId(i as u32), &**b))
    }

    pub fn alloc(&mut self, lo: i64, hi: i64) -> Result<BlockId, MemError> {
        if lo > hi {
            return Err(MemError::BadBounds { lo, hi });
        }
        if hi - lo > MAX_BLOCK_SIZE {
            return Err(MemError::TooLarge(hi - lo));
        }
        let id = self.next_block();
        self.blocks.push(Arc::new(Block {
            lo,
            hi,
            cells: vec![MemCell::Uninit; (hi - lo) as usize],
            live: true,
        }));
        Ok(id)
    }

    pub fn free(&mut self, b: BlockId) -> Result<(), MemError> {
        match self.blocks.get_mut(b.0 as usize) {
            Some(block) if block.live => {
                // Contents of a dead block are unobservable.
                *block = Arc::new(Block { lo: block.lo, hi: block.hi, cells: Vec::new(), live: false });
                Ok(())
            }
            _ => Err(MemError::DoubleFree(b)),
        }
    }

    /// Resolve `addr` to a block and offset valid for an access of `ch`:
    /// a pointer into a live block, in bounds, aligned to the chunk size.
    pub fn check_access(&self, ch: Chunk, addr: Value) -> Result<(BlockId, i64), AccessError> {
        let Value::Ptr(b, ofs) = addr else {
            return Err(AccessError::NotAPointer);
        };
        let block = self.blocks.get(b.0 as usize).ok_or(AccessError::UnknownBlock)?;
        if !block.live {
            return Err(AccessError::DeadBlock);
        }
        let ofs = ofs.signed() as i64;
        let size = ch.size() as i64;
        if ofs < block.lo || ofs + size > block.hi {
            return Err(AccessError::OutOfBounds);
        }
        if ofs.rem_euclid(size) != 0 {
            return Err(AccessError::Misaligned);
        }
        Ok((b, ofs))
    }

    pub fn load(&self, ch: Chunk, addr: Value) -> Result<Value, AccessError> {
        let (b, ofs) = self.check_access(ch, addr)?;
        let block = &self.blocks[b.0 as usize];
        let start = (ofs - block.lo) as usize;
        let cells = &block.cells[start..start + ch.size() as usize];
        let MemCell::Datum { value, chunk, .. } = cells[0] else {
            return Ok(Value::Undef);
        };
        let intact = chunk == ch
            && cells.iter().enumerate().all(|(k, c)| {
                matches!(c, MemCell::Datum { index, value: v, chunk: c2 }
                    if *index as usize == k && *v == value && *c2 == ch)
            });
        Ok(if intact { value } else { Value::Undef })
    }

    /// On failure the memory is left untouched.
    pub fn store(&mut self, ch: Chunk, addr: Value, v: Value) -> Result<(), AccessError> {
        let (b, ofs) = self.check_access(ch, addr)?;
        let value = ch.normalize(v);
        let block = Arc::make_mut(&mut self.blocks[b.0 as usize]);
        let start = (ofs - block.lo) as usize;
        for k in 0..ch.size() as usize {
            block.cells[start + k] = MemCell::Datum { index: k as u8, value, chunk: ch };
        }
        Ok(())
    }

    /// Whether block `b` is shared with `other` without any copy. Used to
    /// summarize memory writes cheaply.
    pub fn same_block(&self, other: &Memory, b: BlockId) -> bool {
        match (self.blocks.get(b.0 as usize), other.blocks.get(b.0 as usize)) {
            (Some(x), Some(y)) => Arc::ptr_eq(x, y) || x == y,
            _ => false,
        }
    }
}
