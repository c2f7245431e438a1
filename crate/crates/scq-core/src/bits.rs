/// Fixed-width bit rows packed into u64 words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitRows {
    width: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitRows {
    pub fn new(rows: usize, width: usize) -> Self {
        let words = width.div_ceil(64).max(1);
        BitRows { width, words, data: vec![0; rows * words] }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.words
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize) {
        self.data[r * self.words + c / 64] |= 1 << (c % 64);
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    pub fn push_row(&mut self, bits: &[u64]) {
        assert_eq!(bits.len(), self.words);
        self.data.extend_from_slice(bits);
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn count(&self, r: usize) -> u32 {
        self.row(r).iter().map(|w| w.count_ones()).sum()
    }
}

/// Popcount of the intersection of two packed rows.
#[inline]
pub fn and_count(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
}
