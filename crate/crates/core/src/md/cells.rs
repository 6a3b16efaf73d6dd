use super::{dot, minimum_image, TorusDomain, Vector};
use crate::error::Result;

/// Linked cells with edge at least the domain cutoff. Boxes with fewer than
/// three cells along some axis fall back to all pairs, since the 3^d stencil
/// would otherwise visit a cell twice.
#[derive(Clone, Debug)]
pub struct CellList {
    all_pairs: bool,
    count: usize,
    starts: Vec<usize>,
    members: Vec<usize>,
    cell_of: Vec<usize>,
    stencil: Vec<Vec<usize>>,
}

impl CellList {
    pub fn build(positions: &[Vector], domain: &TorusDomain, _range: f64) -> Self {
        let dim = domain.dim();
        let per_axis = (domain.side() / domain.cutoff()).floor() as usize;
        let mut n = [1usize; 3];
        for a in n.iter_mut().take(dim) {
            *a = per_axis.max(1);
        }
        if per_axis < 3 {
            return Self {
                all_pairs: true,
                count: positions.len(),
                starts: Vec::new(),
                members: Vec::new(),
                cell_of: Vec::new(),
                stencil: Vec::new(),
            };
        }
        let ncells = n[0] * n[1] * n[2];
        let edge = domain.side() / per_axis as f64;
        let index = |c: [usize; 3]| (c[0] * n[1] + c[1]) * n[2] + c[2];

        let cell_of: Vec<usize> = positions
            .iter()
            .map(|p| {
                let mut c = [0usize; 3];
                for a in 0..dim {
                    c[a] = ((p[a] / edge).floor() as usize).min(n[a] - 1);
                }
                index(c)
            })
            .collect();

        // counting sort keeps particle order inside each cell
        let mut starts = vec![0usize; ncells + 1];
        for &c in &cell_of {
            starts[c + 1] += 1;
        }
        for c in 0..ncells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut members = vec![0usize; positions.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            members[fill[c]] = i;
            fill[c] += 1;
        }

        let span = |a: usize| if a < dim { -1i64..=1 } else { 0i64..=0 };
        let mut stencil = Vec::with_capacity(ncells);
        for cx in 0..n[0] {
            for cy in 0..n[1] {
                for cz in 0..n[2] {
                    let mut list = Vec::new();
                    for ox in span(0) {
                        for oy in span(1) {
                            for oz in span(2) {
                                let w = |c: usize, o: i64, m: usize| {
                                    ((c as i64 + o).rem_euclid(m as i64)) as usize
                                };
                                list.push(index([w(cx, ox, n[0]), w(cy, oy, n[1]), w(cz, oz, n[2])]));
                            }
                        }
                    }
                    stencil.push(list);
                }
            }
        }
        Self { all_pairs: false, count: positions.len(), starts, members, cell_of, stencil }
    }

    fn cell(&self, c: usize) -> &[usize] {
        &self.members[self.starts[c]..self.starts[c + 1]]
    }

    /// Every particle that may interact with `i`, including `i` itself.
    pub fn neighbours_of(&self, i: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        if self.all_pairs {
            Box::new(0..self.count)
        } else {
            let c = self.cell_of[i];
            Box::new(self.stencil[c].iter().flat_map(move |&nc| self.cell(nc).iter().copied()))
        }
    }
}

/// Visits every unordered pair i < j with r_ij < range exactly once, in a
/// fixed order. `dx` is the minimum image of ξ_i - ξ_j.
pub fn for_each_pair<F>(positions: &[Vector], domain: &TorusDomain, range: f64, mut f: F) -> Result<()>
where
    F: FnMut(usize, usize, Vector, f64) -> Result<()>,
{
    let r2max = range * range;
    let cells = CellList::build(positions, domain, range);
    if cells.all_pairs {
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let dx = minimum_image(&positions[i], &positions[j], domain);
                let r2 = dot(&dx, &dx);
                if r2 < r2max {
                    f(i, j, dx, r2)?;
                }
            }
        }
        return Ok(());
    }
    for c in 0..cells.stencil.len() {
        for &i in cells.cell(c) {
            for &nc in &cells.stencil[c] {
                for &j in cells.cell(nc) {
                    if j <= i {
                        continue;
                    }
                    let dx = minimum_image(&positions[i], &positions[j], domain);
                    let r2 = dot(&dx, &dx);
                    if r2 < r2max {
                        f(i, j, dx, r2)?;
                    }
                }
            }
        }
    }
    Ok(())
}
