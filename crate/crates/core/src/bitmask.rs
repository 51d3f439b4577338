/// Dense row-major boolean matrix packed into `u64` words.
///
/// Each row starts on a word boundary; unused trailing bits are kept zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    pub fn filled(rows: usize, cols: usize) -> Self {
        let mut m = Self::new(rows, cols);
        for r in 0..rows {
            m.fill_row(r, true);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        let bit = 1u64 << (col % 64);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    pub fn fill_row(&mut self, row: usize, value: bool) {
        let start = row * self.words_per_row;
        let words = &mut self.words[start..start + self.words_per_row];
        if !value {
            words.fill(0);
            return;
        }
        words.fill(u64::MAX);
        let tail = self.cols % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << tail) - 1;
            }
        }
    }

    pub fn row_words(&self, row: usize) -> &[u64] {
        let start = row * self.words_per_row;
        &self.words[start..start + self.words_per_row]
    }

    pub(crate) fn row_words_mut(&mut self) -> std::slice::ChunksMut<'_, u64> {
        self.words.chunks_mut(self.words_per_row.max(1))
    }

    pub fn row_count_ones(&self, row: usize) -> usize {
        self.row_words(row).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_all_true(&self) -> bool {
        self.count_ones() == self.rows * self.cols
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::new(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    /// Row bytes, least significant bit first, `ceil(cols / 8)` bytes.
    pub fn row_bytes(&self, row: usize) -> Vec<u8> {
        let n = self.cols.div_ceil(8);
        self.row_words(row)
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(n)
            .collect()
    }

    pub fn set_row_bytes(&mut self, row: usize, bytes: &[u8]) {
        let start = row * self.words_per_row;
        for (i, chunk) in bytes.chunks(8).enumerate().take(self.words_per_row) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.words[start + i] = u64::from_le_bytes(buf);
        }
        let tail = self.cols % 64;
        if tail != 0 && self.words_per_row > 0 {
            self.words[start + self.words_per_row - 1] &= (1u64 << tail) - 1;
        }
    }
}
