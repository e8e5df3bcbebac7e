//! Torus geometry, spin configurations, and local windows.
//!
//! Sites are stored as flat `u32` indices `u = sum_i coords[i] * L^i`;
//! coordinate form appears only at API boundaries. The canonical ordering of
//! the ball `B(0,m)` fixes how local spin vectors index the arguments of
//! boolean update functions, so it is documented here once and reused by
//! every other module:
//!
//! * `d = 1`: offsets `-m, ..., -1, 0, 1, ..., m` (the center sits at
//!   position `m`);
//! * `d = 2`: offsets sorted by `(distance, (dx, dy))` lexicographically
//!   (the center sits at position `0`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A site of the torus, as a flat index in `[0, L^d)`.
pub type Site = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("ball radius {m} does not fit: need 2m+1 <= L, got L = {l}")]
    RadiusTooLarge { m: usize, l: u32 },
    #[error("dimension {0} unsupported (only d = 1 and d = 2)")]
    DimensionUnsupported(u8),
    #[error("side length {l} too small: need L >= {min}")]
    SideTooSmall { l: u32, min: u32 },
}

/// The discrete torus `(Z/LZ)^d` for `d` in `{1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Torus {
    d: u8,
    l: u32,
}

impl Torus {
    /// `d` must be 1 or 2 and `L >= 2` so every site has 2d distinct axes.
    pub fn new(d: u8, l: u32) -> Result<Self, LatticeError> {
        if d != 1 && d != 2 {
            return Err(LatticeError::DimensionUnsupported(d));
        }
        if l < 2 {
            return Err(LatticeError::SideTooSmall { l, min: 2 });
        }
        Ok(Torus { d, l })
    }

    #[inline]
    pub fn d(&self) -> u8 {
        self.d
    }

    #[inline]
    pub fn side(&self) -> u32 {
        self.l
    }

    /// Number of sites `N = L^d`.
    #[inline]
    pub fn sites(&self) -> usize {
        (self.l as usize).pow(self.d as u32)
    }

    /// Number of edges `d * L^d`, indexed as `axis * N + site`.
    #[inline]
    pub fn edges(&self) -> usize {
        self.d as usize * self.sites()
    }

    /// Checks that `B(0,m)` embeds injectively: `L > 2m + 1`.
    pub fn check_radius(&self, m: usize) -> Result<(), LatticeError> {
        if 2 * m + 1 >= self.l as usize {
            return Err(LatticeError::RadiusTooLarge { m, l: self.l });
        }
        Ok(())
    }

    #[inline]
    pub fn coords(&self, u: Site) -> [u32; 2] {
        match self.d {
            1 => [u, 0],
            _ => [u % self.l, u / self.l],
        }
    }

    #[inline]
    pub fn site(&self, coords: [u32; 2]) -> Site {
        match self.d {
            1 => coords[0] % self.l,
            _ => (coords[0] % self.l) + (coords[1] % self.l) * self.l,
        }
    }

    /// Site shifted by `delta` along `axis` (0 = x, 1 = y), wrapping mod L.
    #[inline]
    pub fn step(&self, u: Site, axis: u8, delta: i64) -> Site {
        let l = self.l as i64;
        let mut c = self.coords(u);
        let a = axis as usize;
        c[a] = ((c[a] as i64 + delta).rem_euclid(l)) as u32;
        self.site(c)
    }

    /// Both endpoints of edge index `e = axis * N + site`: `(u, u + e_axis)`.
    #[inline]
    pub fn edge_endpoints(&self, e: usize) -> (Site, Site) {
        let n = self.sites();
        let axis = (e / n) as u8;
        let u = (e % n) as Site;
        (u, self.step(u, axis, 1))
    }

    /// The 2d nearest neighbors in fixed order: +x, -x, then +y, -y.
    pub fn neighbors(&self, u: Site) -> Vec<Site> {
        let mut out = Vec::with_capacity(2 * self.d as usize);
        for axis in 0..self.d {
            out.push(self.step(u, axis, 1));
            out.push(self.step(u, axis, -1));
        }
        out
    }

    /// Shortest-path (torus) distance: per axis, `min(|delta|, L - |delta|)`.
    pub fn distance(&self, u: Site, v: Site) -> u32 {
        let (cu, cv) = (self.coords(u), self.coords(v));
        let mut total = 0;
        for a in 0..self.d as usize {
            let diff = cu[a].abs_diff(cv[a]);
            total += diff.min(self.l - diff);
        }
        total
    }

    /// Sites of `ball(u, m)` in canonical order.
    pub fn ball(&self, u: Site, geom: &BallGeometry) -> Result<Vec<Site>, LatticeError> {
        self.check_radius(geom.m())?;
        Ok(geom
            .offsets()
            .iter()
            .map(|&off| self.offset_site(u, off))
            .collect())
    }

    #[inline]
    pub fn offset_site(&self, u: Site, off: [i32; 2]) -> Site {
        let l = self.l as i64;
        let c = self.coords(u);
        let x = ((c[0] as i64 + off[0] as i64).rem_euclid(l)) as u32;
        if self.d == 1 {
            x
        } else {
            let y = ((c[1] as i64 + off[1] as i64).rem_euclid(l)) as u32;
            x + y * self.l
        }
    }
}

/// Canonical enumeration of the offsets of `B(0,m)` for a fixed dimension.
///
/// Boolean update tables, local rate tables and pivotal-set machinery all
/// index their arguments by position in this enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallGeometry {
    d: u8,
    m: usize,
    offsets: Vec<[i32; 2]>,
    center: usize,
}

impl BallGeometry {
    pub fn new(d: u8, m: usize) -> Result<Self, LatticeError> {
        if d != 1 && d != 2 {
            return Err(LatticeError::DimensionUnsupported(d));
        }
        let mut offsets: Vec<[i32; 2]> = Vec::new();
        let mi = m as i32;
        match d {
            1 => {
                for dx in -mi..=mi {
                    offsets.push([dx, 0]);
                }
            }
            _ => {
                for dx in -mi..=mi {
                    for dy in -mi..=mi {
                        if dx.abs() + dy.abs() <= mi {
                            offsets.push([dx, dy]);
                        }
                    }
                }
                offsets.sort_by_key(|o| (o[0].abs() + o[1].abs(), o[0], o[1]));
            }
        }
        let center = offsets.iter().position(|&o| o == [0, 0]).expect("center");
        Ok(BallGeometry {
            d,
            m,
            offsets,
            center,
        })
    }

    #[inline]
    pub fn d(&self) -> u8 {
        self.d
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// `|B(0,m)|`, the arity of local spin vectors.
    #[inline]
    pub fn size(&self) -> usize {
        self.offsets.len()
    }

    /// Position of the origin in the canonical order (`m` for d=1, `0` for d=2).
    #[inline]
    pub fn center_index(&self) -> usize {
        self.center
    }

    #[inline]
    pub fn offsets(&self) -> &[[i32; 2]] {
        &self.offsets
    }
}

/// A spin configuration on the full torus; values are -1 or +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn all_plus(t: &Torus) -> Self {
        SpinConfig {
            spins: vec![1; t.sites()],
        }
    }

    pub fn all_minus(t: &Torus) -> Self {
        SpinConfig {
            spins: vec![-1; t.sites()],
        }
    }

    pub fn from_spins(spins: Vec<i8>) -> Self {
        debug_assert!(spins.iter().all(|&s| s == 1 || s == -1));
        SpinConfig { spins }
    }

    /// Product Rademacher(rho) sample.
    pub fn random(t: &Torus, rho: f64, rng: &mut impl rand::Rng) -> Self {
        use rand::RngExt;
        let p_plus = (1.0 + rho) / 2.0;
        SpinConfig {
            spins: (0..t.sites())
                .map(|_| if rng.random::<f64>() < p_plus { 1 } else { -1 })
                .collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    #[inline]
    pub fn get(&self, u: Site) -> i8 {
        self.spins[u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: Site, v: i8) {
        self.spins[u as usize] = v;
    }

    #[inline]
    pub fn swap(&mut self, u: Site, v: Site) {
        self.spins.swap(u as usize, v as usize);
    }

    #[inline]
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// Total magnetization `sum_u x(u)`.
    pub fn magnetization(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    /// Global spin flip `x -> -x`.
    pub fn flipped(&self) -> Self {
        SpinConfig {
            spins: self.spins.iter().map(|&s| -s).collect(),
        }
    }

    /// Coordinatewise partial order.
    pub fn le(&self, other: &Self) -> bool {
        self.spins
            .iter()
            .zip(&other.spins)
            .all(|(&a, &b)| a <= b)
    }

    /// Local spin vector of `x` around `u`, encoded as a bitmask over the
    /// canonical ball order: bit `j` is set iff the spin at offset `j` is +1.
    #[inline]
    pub fn local_window(&self, t: &Torus, u: Site, geom: &BallGeometry) -> u32 {
        let mut mask = 0u32;
        for (j, &off) in geom.offsets().iter().enumerate() {
            let s = self.spins[t.offset_site(u, off) as usize];
            mask |= (((s >> 1) & 1) as u32 ^ 1) << j; // s=+1 -> bit 1, s=-1 -> bit 0
        }
        mask
    }
}

/// Decodes bit `j` of a local-vector mask into a spin value.
#[inline]
pub fn mask_spin(mask: u32, j: usize) -> i8 {
    if (mask >> j) & 1 == 1 {
        1
    } else {
        -1
    }
}
