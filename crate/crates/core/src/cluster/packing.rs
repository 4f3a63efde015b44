//! Word-aligned index packing.
//!
//! With `f = floor(32 / bits)` indices per word, index `j` lives in word
//! `j / f` at bit offset `(j % f) * bits`. Indices never straddle words and
//! the unused high bits of every word are zero.

use super::{ClusterError, Result};

/// Random access to a stream of centroid indices.
pub trait IndexSource {
    fn len(&self) -> usize;
    fn index(&self, j: usize) -> u32;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl IndexSource for [u8] {
    fn len(&self) -> usize {
        <[u8]>::len(self)
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        self[j] as u32
    }
}

impl IndexSource for [u32] {
    fn len(&self) -> usize {
        <[u32]>::len(self)
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        self[j]
    }
}

impl<T: IndexSource + ?Sized> IndexSource for &T {
    fn len(&self) -> usize {
        (**self).len()
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        (**self).index(j)
    }
}

impl IndexSource for Vec<u32> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        self[j]
    }
}

impl IndexSource for Vec<u8> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        self[j] as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedIndices {
    bits: u32,
    count: usize,
    words: Vec<u32>,
}

#[inline]
fn per_word(bits: u32) -> usize {
    (32 / bits) as usize
}

#[inline]
fn mask(bits: u32) -> u32 {
    if bits == 32 {
        u32::MAX
    } else {
        (1u32 << bits) - 1
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if (1..=32).contains(&bits) {
        Ok(())
    } else {
        Err(ClusterError::InvalidBits(bits))
    }
}

impl PackedIndices {
    /// Adopts pre-packed words, checking their count and that the unused
    /// high bits are clear. `word_offset` is the byte offset of the first
    /// word, used only for error reporting.
    pub fn from_words(bits: u8, count: usize, words: Vec<u32>, word_offset: usize) -> Result<Self> {
        let bits = bits as u32;
        check_bits(bits)?;
        let f = per_word(bits);
        let needed = count.div_ceil(f);
        if words.len() != needed {
            return Err(ClusterError::Truncated {
                offset: word_offset + 4 * words.len().min(needed),
                needed: 4 * needed.saturating_sub(words.len()),
                available: 0,
            });
        }
        let used = (f as u32) * bits;
        for (w, &word) in words.iter().enumerate() {
            let live = if w + 1 == needed && !count.is_multiple_of(f) { (count % f) as u32 * bits } else { used };
            if live < 32 && word >> live != 0 {
                return Err(ClusterError::CorruptPadding { offset: word_offset + 4 * w });
            }
        }
        Ok(PackedIndices { bits, count, words })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    #[inline]
    pub fn get(&self, j: usize) -> u32 {
        debug_assert!(j < self.count);
        let f = per_word(self.bits);
        (self.words[j / f] >> ((j % f) as u32 * self.bits)) & mask(self.bits)
    }
}

impl IndexSource for PackedIndices {
    fn len(&self) -> usize {
        self.count
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        self.get(j)
    }
}

/// Packs `indices` at `bits` per index. Every index must fit in `bits`.
pub fn pack_indices(indices: &[u32], bits: u8) -> Result<PackedIndices> {
    let bits = bits as u32;
    check_bits(bits)?;
    let f = per_word(bits);
    let m = mask(bits);
    let words = indices
        .chunks(f)
        .enumerate()
        .map(|(c, chunk)| {
            chunk.iter().enumerate().try_fold(0u32, |w, (s, &i)| {
                if i & !m != 0 {
                    Err(ClusterError::IndexOutOfRange { position: c * f + s, index: i, limit: m })
                } else {
                    Ok(w | i << (s as u32 * bits))
                }
            })
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(PackedIndices { bits, count: indices.len(), words })
}

pub fn unpack_indices(packed: &PackedIndices) -> Vec<u32> {
    (0..packed.count).map(|j| packed.get(j)).collect()
}

/// Contiguous sub-range of a packed stream.
#[derive(Debug, Clone, Copy)]
pub struct PackedSlice<'a> {
    packed: &'a PackedIndices,
    start: usize,
    len: usize,
}

impl<'a> PackedSlice<'a> {
    pub fn new(packed: &'a PackedIndices, start: usize, len: usize) -> Self {
        assert!(start + len <= packed.count, "slice exceeds packed stream");
        PackedSlice { packed, start, len }
    }
}

impl IndexSource for PackedSlice<'_> {
    fn len(&self) -> usize {
        self.len
    }
    #[inline]
    fn index(&self, j: usize) -> u32 {
        debug_assert!(j < self.len);
        self.packed.get(self.start + j)
    }
}
