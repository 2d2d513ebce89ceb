//! Sites and unit directions of the integer lattice.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 6;

/// A unit vector `sign * e_{axis+1}`.
///
/// The canonical order used everywhere (inverse-CDF sampling, serialization,
/// grid layouts) is `+e1, -e1, +e2, -e2, ...`, i.e. [`Direction::index`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction {
    axis: u8,
    negative: bool,
}

impl Direction {
    pub fn new(axis: usize, sign: i8) -> Self {
        assert!(axis < MAX_DIM, "axis {axis} exceeds MAX_DIM");
        assert!(sign == 1 || sign == -1, "sign must be +1 or -1");
        Self {
            axis: axis as u8,
            negative: sign < 0,
        }
    }

    pub fn plus(axis: usize) -> Self {
        Self::new(axis, 1)
    }

    pub fn minus(axis: usize) -> Self {
        Self::new(axis, -1)
    }

    pub fn axis(self) -> usize {
        self.axis as usize
    }

    pub fn sign(self) -> i32 {
        if self.negative {
            -1
        } else {
            1
        }
    }

    pub fn is_positive(self) -> bool {
        !self.negative
    }

    pub fn opposite(self) -> Self {
        Self {
            axis: self.axis,
            negative: !self.negative,
        }
    }

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        2 * self.axis as usize + self.negative as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self::new(index / 2, if index % 2 == 0 { 1 } else { -1 })
    }

    /// All `2d` directions in canonical order.
    pub fn all(dim: usize) -> impl Iterator<Item = Direction> {
        (0..2 * dim).map(Direction::from_index)
    }

    pub fn unit_vector(self, dim: usize) -> Vec<i32> {
        let mut v = vec![0; dim];
        v[self.axis()] = self.sign();
        v
    }

    /// `self · v` for a real vector.
    pub fn dot(self, v: &[f64]) -> f64 {
        self.sign() as f64 * v[self.axis()]
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.negative { '-' } else { '+' };
        write!(f, "{s}e{}", self.axis + 1)
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidDirection(s.to_string());
        let t = s.trim();
        let (sign, rest) = match t.chars().next() {
            Some('+') => (1, &t[1..]),
            Some('-') => (-1, &t[1..]),
            _ => return Err(bad()),
        };
        let num = rest.strip_prefix('e').ok_or_else(bad)?;
        let axis: usize = num.parse().map_err(|_| bad())?;
        if axis == 0 || axis > MAX_DIM {
            return Err(bad());
        }
        Ok(Direction::new(axis - 1, sign))
    }
}

/// A lattice point of `Z^d`, `d <= MAX_DIM`. Unused coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        Self {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    pub fn from_coords(coords: &[i32]) -> Self {
        let mut s = Self::origin(coords.len());
        s.coords[..coords.len()].copy_from_slice(coords);
        s
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    pub fn coord(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    pub fn step(mut self, dir: Direction) -> Self {
        self.coords[dir.axis()] += dir.sign();
        self
    }

    pub fn offset(mut self, delta: &[i32]) -> Self {
        for (c, d) in self.coords.iter_mut().zip(delta) {
            *c += d;
        }
        self
    }

    pub fn sub(&self, other: &Site) -> Vec<i64> {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| *a as i64 - *b as i64)
            .collect()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.coords()
            .iter()
            .zip(v)
            .map(|(c, x)| *c as f64 * x)
            .sum()
    }

    /// Sup-norm distance.
    pub fn sup_dist(&self, other: &Site) -> i64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (*a as i64 - *b as i64).abs())
            .max()
            .unwrap_or(0)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.coords().iter().map(|&c| c as f64).collect()
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

/// Zig-zag map `Z -> N`: 0, -1, 1, -2, 2, ... -> 0, 1, 2, 3, 4, ...
pub fn zigzag(c: i32) -> u32 {
    ((c << 1) ^ (c >> 31)) as u32
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns `v / |v|`, or `None` for the zero vector.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order() {
        let names: Vec<String> = Direction::all(2).map(|d| d.to_string()).collect();
        assert_eq!(names, ["+e1", "-e1", "+e2", "-e2"]);
        for (i, d) in Direction::all(4).enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(Direction::from_index(i), d);
        }
    }

    #[test]
    fn two_d_distinct_unit_vectors() {
        for dim in 1..=MAX_DIM {
            let vs: std::collections::HashSet<Vec<i32>> =
                Direction::all(dim).map(|d| d.unit_vector(dim)).collect();
            assert_eq!(vs.len(), 2 * dim);
            for v in vs {
                assert_eq!(v.iter().filter(|&&c| c != 0).count(), 1);
            }
        }
    }

    #[test]
    fn parse_roundtrip() {
        for d in Direction::all(3) {
            assert_eq!(d.to_string().parse::<Direction>().unwrap(), d);
        }
        assert!("e1".parse::<Direction>().is_err());
        assert!("+e0".parse::<Direction>().is_err());
        assert!("+x1".parse::<Direction>().is_err());
    }

    #[test]
    fn zigzag_small_values() {
        let got: Vec<u32> = [0, -1, 1, -2, 2, i32::MIN, i32::MAX]
            .iter()
            .map(|&c| zigzag(c))
            .collect();
        assert_eq!(got, [0, 1, 2, 3, 4, u32::MAX, u32::MAX - 1]);
    }

    #[test]
    fn site_step_and_dot() {
        let s = Site::origin(2).step(Direction::plus(0)).step(Direction::minus(1));
        assert_eq!(s.coords(), &[1, -1]);
        assert_eq!(s.dot(&[1.0, -1.0]), 2.0);
        assert_eq!(s.sup_dist(&Site::origin(2)), 1);
    }
}
