//! Sign-of-random-projection hashing, bucket ids and the stable sort that
//! groups a behavior sequence by bucket.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diff::Tensor2;
use crate::error::{Error, Result};

/// Largest supported code width; ids must stay below the padding id.
pub const MAX_HASH_BITS: usize = 62;

/// Bucket id reserved for padding rows. Never produced by [`bucket_ids`].
pub const PAD_BUCKET: u64 = u64::MAX;

/// `d_b x m` Gaussian matrix, fixed for the lifetime of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    seed: u64,
    matrix: Tensor2,
}

impl ProjectionMatrix {
    /// Draws `input_dim x bits` i.i.d. standard normal entries from `seed`.
    pub fn sample(input_dim: usize, bits: usize, seed: u64) -> Result<Self> {
        check_bits(bits)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> =
            (0..input_dim * bits).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self { seed, matrix: Tensor2::new(input_dim, bits, data)? })
    }

    /// Wraps an explicit matrix (e.g. one read back from a checkpoint).
    pub fn from_tensor(matrix: Tensor2, seed: u64) -> Result<Self> {
        check_bits(matrix.cols())?;
        Ok(Self { seed, matrix })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits(&self) -> usize {
        self.matrix.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Tensor2 {
        &self.matrix
    }
}

fn check_bits(bits: usize) -> Result<()> {
    if bits == 0 || bits > MAX_HASH_BITS {
        return Err(Error::Config(format!("hash bits must be in 1..={MAX_HASH_BITS}, got {bits}")));
    }
    Ok(())
}

/// `L x m` matrix of hash bits, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashCodes {
    rows: usize,
    bits: usize,
    data: Vec<bool>,
}

impl HashCodes {
    pub fn from_bits(rows: usize, bits: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * bits {
            return Err(Error::dim("HashCodes::from_bits", (rows, bits), (data.len(), 1)));
        }
        Ok(Self { rows, bits, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn get(&self, row: usize, bit: usize) -> bool {
        self.data[row * self.bits + bit]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.data[row * self.bits..(row + 1) * self.bits]
    }
}

/// `H[i][j] = 1` iff `(xb R)[i][j] > 0`; exact zeros map to 0.
pub fn hash_codes(xb: &Tensor2, projection: &ProjectionMatrix) -> Result<HashCodes> {
    if xb.cols() != projection.input_dim() {
        return Err(Error::dim("hash_codes", xb.shape(), projection.matrix.shape()));
    }
    let projected = xb.matmul(&projection.matrix)?;
    let data = projected.data().iter().map(|&v| v > 0.0).collect();
    Ok(HashCodes { rows: xb.rows(), bits: projection.bits(), data })
}

/// Reads each code as a big-endian unsigned integer.
pub fn bucket_ids(codes: &HashCodes) -> Result<Vec<u64>> {
    if codes.bits > MAX_HASH_BITS {
        return Err(Error::Config(format!(
            "{} hash bits exceed the {MAX_HASH_BITS}-bit bucket id limit",
            codes.bits
        )));
    }
    Ok((0..codes.rows)
        .map(|i| codes.row(i).iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b)))
        .collect())
}

/// Permutation that stably sorts a sequence by bucket id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashAssignment {
    pub bucket_ids: Vec<u64>,
    /// Sorted position `k` holds original row `perm[k]`.
    pub perm: Vec<usize>,
    pub inverse_perm: Vec<usize>,
}

impl HashAssignment {
    /// Stable order of `ids`: non-decreasing, ties keep input order.
    pub fn from_ids(ids: Vec<u64>) -> Self {
        let mut comparisons = 0;
        Self::from_ids_counted(ids, &mut comparisons)
    }

    /// Like [`from_ids`](Self::from_ids) and adds the number of key
    /// comparisons performed to `comparisons`.
    pub fn from_ids_counted(ids: Vec<u64>, comparisons: &mut u64) -> Self {
        let mut perm: Vec<usize> = (0..ids.len()).collect();
        // slice::sort_by is stable.
        perm.sort_by(|&a, &b| {
            *comparisons += 1;
            ids[a].cmp(&ids[b])
        });
        let inverse_perm = invert(&perm);
        Self { bucket_ids: ids, perm, inverse_perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Bucket ids in sorted order.
    pub fn sorted_ids(&self) -> Vec<u64> {
        self.perm.iter().map(|&i| self.bucket_ids[i]).collect()
    }

    pub fn apply(&self, x: &Tensor2) -> Result<Tensor2> {
        self.check_len(x)?;
        x.gather_rows(&self.perm)
    }

    pub fn restore(&self, sorted: &Tensor2) -> Result<Tensor2> {
        self.check_len(sorted)?;
        sorted.gather_rows(&self.inverse_perm)
    }

    fn check_len(&self, x: &Tensor2) -> Result<()> {
        if x.rows() != self.perm.len() {
            return Err(Error::dim("HashAssignment", (self.perm.len(), 0), x.shape()));
        }
        Ok(())
    }
}

/// Inverse of a permutation given as `perm[k] = source index`.
pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Stable sort of `xb` rows by `ids`. Returns the assignment and sorted rows.
pub fn stable_sort(xb: &Tensor2, ids: &[u64]) -> Result<(HashAssignment, Tensor2)> {
    if ids.len() != xb.rows() {
        return Err(Error::dim("stable_sort", xb.shape(), (ids.len(), 1)));
    }
    let assignment = HashAssignment::from_ids(ids.to_vec());
    let sorted = assignment.apply(xb)?;
    Ok((assignment, sorted))
}

/// Hash, bucket and sort in one step.
pub fn assign(xb: &Tensor2, projection: &ProjectionMatrix) -> Result<(HashCodes, HashAssignment)> {
    let codes = hash_codes(xb, projection)?;
    let ids = bucket_ids(&codes)?;
    Ok((codes, HashAssignment::from_ids(ids)))
}
