use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid, Mask, ProbabilityMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(n: u8) -> std::result::Result<Self, String> {
        match n {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(format!("connectivity must be 6 or 26, got {n}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    pub(crate) fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dk in -1i64..=1 {
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let manhattan = di.abs() + dj.abs() + dk.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

/// Calls `f` with the linear index of every in-grid neighbour of `idx`.
pub(crate) fn for_each_neighbor(grid: &Grid, offsets: &[[i64; 3]], idx: usize, mut f: impl FnMut(usize)) {
    let [i, j, k] = grid.voxel_index(idx);
    let dims = grid.dims();
    for o in offsets {
        let (x, y, z) = (i as i64 + o[0], j as i64 + o[1], k as i64 + o[2]);
        if x < 0 || y < 0 || z < 0 || x >= dims[0] as i64 || y >= dims[1] as i64 || z >= dims[2] as i64 {
            continue;
        }
        f(grid.linear_index(x as usize, y as usize, z as usize));
    }
}

/// Flood fill from `seeds` through voxels accepted by `accept`.
pub(crate) fn flood(grid: &Grid, seeds: &[usize], conn: Connectivity, accept: impl Fn(usize) -> bool) -> Vec<bool> {
    let offsets = conn.offsets();
    let mut visited = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if !visited[s] && accept(s) {
            visited[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(idx) = queue.pop_front() {
        for_each_neighbor(grid, &offsets, idx, |n| {
            if !visited[n] && accept(n) {
                visited[n] = true;
                queue.push_back(n);
            }
        });
    }
    visited
}

/// Labels connected components (labels start at 1, 0 is background) and
/// returns the labels with each component's size. Components are numbered in
/// order of their first voxel.
pub fn label_components(mask: &Mask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let grid = mask.grid();
    let offsets = conn.offsets();
    let data = mask.data();
    let mut labels = vec![0u32; data.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        sizes.push(0);
        let label = sizes.len() as u32;
        labels[start] = label;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            sizes[label as usize - 1] += 1;
            for_each_neighbor(grid, &offsets, idx, |n| {
                if data[n] && labels[n] == 0 {
                    labels[n] = label;
                    queue.push_back(n);
                }
            });
        }
    }
    (labels, sizes)
}

/// Keeps only the largest 26-connected component. Among equally large
/// components the one reached first in storage order wins.
pub fn postprocess(mask: &Mask) -> Mask {
    let (labels, sizes) = label_components(mask, Connectivity::TwentySix);
    let Some(best) = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(n, _)| n as u32 + 1)
    else {
        return mask.clone();
    };
    let data = labels.iter().map(|&l| l == best).collect();
    Mask::new(mask.grid().clone(), data).expect("same grid")
}

/// `p >= tau` voxelwise.
pub fn binarize(p: &ProbabilityMap, tau: f64) -> Result<Mask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("threshold {tau} outside [0, 1]")));
    }
    let data = p.data().iter().map(|&v| v >= tau).collect();
    Mask::new(p.grid().clone(), data)
}
