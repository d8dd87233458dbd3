//! Permutations, shuffles and Koszul signs for graded tuples.
//!
//! Conventions used throughout the crate:
//! * permutations are stored in one-line notation, 0-based: `perm[i] = σ(i)`;
//! * `koszul_sign(σ, degs)` is the sign ε with
//!   `v_{σ(0)} ⊗ … ⊗ v_{σ(m-1)} = ε · v_0 ⊗ … ⊗ v_{m-1}`,
//!   where `degs[k]` is the degree of `v_k`.  Only degree parities matter.
//!   ε is a product over the inverted value pairs of σ, one factor
//!   (-1)^{|v_a||v_b|} per pair.  Undoing a permutation costs the same sign:
//!   ε(σ⁻¹; σ·degs) = ε(σ; degs), where (σ·degs)[k] = degs[σ(k)].

pub type Degree = i64;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self, String> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v >= n || seen[v] {
                return Err(format!("not a permutation of 0..{n}: {images:?}"));
            }
            seen[v] = true;
        }
        Ok(Permutation(images))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn image(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Permutation(inv)
    }

    /// (self ∘ other)(i) = self(other(i)).
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len());
        Permutation(other.0.iter().map(|&i| self.0[i]).collect())
    }

    /// Ordinary permutation sign (all degrees odd).
    pub fn sign(&self) -> i64 {
        let mut inversions = 0usize;
        for i in 0..self.0.len() {
            for j in i + 1..self.0.len() {
                if self.0[i] > self.0[j] {
                    inversions += 1;
                }
            }
        }
        if inversions % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Applies the permutation to a tuple: output[i] = input[σ(i)].
    pub fn apply<T: Clone>(&self, tuple: &[T]) -> Vec<T> {
        assert_eq!(self.len(), tuple.len());
        self.0.iter().map(|&i| tuple[i].clone()).collect()
    }

    /// All of S_n in lexicographic order of one-line notation.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut current: Vec<usize> = (0..n).collect();
        loop {
            out.push(Permutation(current.clone()));
            if !next_lex(&mut current) {
                break;
            }
        }
        out
    }
}

fn next_lex(a: &mut [usize]) -> bool {
    let n = a.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// Koszul sign of σ acting on a tuple with the given degrees (see module docs).
pub fn koszul_sign(perm: &Permutation, degs: &[Degree]) -> i64 {
    assert_eq!(perm.len(), degs.len());
    let mut exp: i64 = 0;
    let images = perm.images();
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            if images[i] > images[j] {
                exp += degs[images[i]] * degs[images[j]];
            }
        }
    }
    if exp % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Koszul sign for sorting `keyed` by its keys, where ties keep their order.
/// Returns the sign of the stable sort together with the sorted tuple.
pub fn sort_with_koszul<T: Clone, K: Ord>(
    items: &[(K, Degree, T)],
) -> (i64, Vec<T>)
where
    K: Clone,
{
    // Insertion sort; each adjacent swap of entries with degrees d, d'
    // contributes (-1)^{d·d'}.
    let mut work: Vec<(K, Degree, T)> = items.to_vec();
    let mut exp: i64 = 0;
    for i in 1..work.len() {
        let mut j = i;
        while j > 0 && work[j - 1].0 > work[j].0 {
            exp += work[j - 1].1 * work[j].1;
            work.swap(j - 1, j);
            j -= 1;
        }
    }
    let sign = if exp % 2 == 0 { 1 } else { -1 };
    (sign, work.into_iter().map(|(_, _, t)| t).collect())
}

/// Enumerates (p₁,…,p_k)-shuffles: permutations increasing on each of the k
/// consecutive position blocks.  Lexicographic order of one-line notation.
pub fn shuffles(block_sizes: &[usize]) -> Vec<Permutation> {
    let n: usize = block_sizes.iter().sum();
    let mut out = Vec::new();
    let mut chosen: Vec<Vec<usize>> = Vec::new();
    let mut used = vec![false; n];
    pick_blocks(block_sizes, 0, n, &mut used, &mut chosen, &mut out);
    out
}

fn pick_blocks(
    blocks: &[usize],
    b: usize,
    n: usize,
    used: &mut Vec<bool>,
    chosen: &mut Vec<Vec<usize>>,
    out: &mut Vec<Permutation>,
) {
    if b == blocks.len() {
        let images: Vec<usize> = chosen.iter().flatten().copied().collect();
        out.push(Permutation::new(images).expect("shuffle is a permutation"));
        return;
    }
    let free: Vec<usize> = (0..n).filter(|&v| !used[v]).collect();
    for combo in combinations(&free, blocks[b]) {
        for &v in &combo {
            used[v] = true;
        }
        chosen.push(combo.clone());
        pick_blocks(blocks, b + 1, n, used, chosen, out);
        chosen.pop();
        for &v in &combo {
            used[v] = false;
        }
    }
}

/// k-subsets of `pool` (already sorted), each emitted in ascending order,
/// enumerated lexicographically.
pub fn combinations(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(pool: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..pool.len() {
            if pool.len() - i < k - cur.len() {
                break;
            }
            cur.push(pool[i]);
            rec(pool, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(pool, k, 0, &mut cur, &mut out);
    out
}
