//! Iterated-bracket flag `L_1 ⊆ L_2 ⊆ …` of a generator set, growth vectors
//! and regularity of the generated foliation.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::exact;
use crate::expr::{Exponent, Rational};
use crate::par;
use crate::vfield::{lie_bracket, VectorField};

pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Clone, Debug)]
pub struct BracketFlag {
    generators: Vec<VectorField>,
    /// Cumulative layers; `layers[0]` are the generators.
    layers: Vec<Vec<VectorField>>,
    max_depth: usize,
    stabilized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthVector {
    pub point: Vec<Rational>,
    pub dims: Vec<usize>,
    /// 1-based depth at which the target dimension is reached; `None` when never.
    pub step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Regularity {
    Regular(usize),
    Irregular { rank: usize, witnesses: Vec<Vec<Rational>> },
}

type Coeffs = BTreeMap<(usize, Exponent), Rational>;

fn coefficients(v: &VectorField) -> Coeffs {
    let mut out = Coeffs::new();
    for (i, c) in v.components().iter().enumerate() {
        for (e, r) in c.terms() {
            out.insert((i, e.clone()), r.clone());
        }
    }
    out
}

fn span_rank(vectors: &[&Coeffs]) -> usize {
    let mut keys: BTreeMap<&(usize, Exponent), usize> = BTreeMap::new();
    for v in vectors {
        for k in v.keys() {
            let next = keys.len();
            keys.entry(k).or_insert(next);
        }
    }
    let rows: Vec<Vec<Rational>> = vectors
        .iter()
        .map(|v| {
            let mut row = vec![Rational::zero(); keys.len()];
            for (k, c) in v.iter() {
                row[keys[k]] = c.clone();
            }
            row
        })
        .collect();
    exact::rank(&rows, keys.len())
}

fn eval_rank(fields: &[VectorField], x: &[Rational]) -> Result<usize> {
    if fields.is_empty() {
        return Ok(0);
    }
    let rows = fields.iter().map(|f| f.eval(x)).collect::<Result<Vec<_>>>()?;
    Ok(exact::rank(&rows, x.len()))
}

impl BracketFlag {
    pub fn generators(&self) -> &[VectorField] {
        &self.generators
    }

    pub fn layers(&self) -> &[Vec<VectorField>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn stabilized(&self) -> bool {
        self.stabilized
    }

    pub fn final_layer(&self) -> &[VectorField] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Builds `L_{m+1} = L_m ∪ {[X, W] : X generator, W ∈ L_m \ L_{m-1}}`, discarding
/// brackets that lie in the ℚ-span of fields already present.
///
/// Stops when every probe reaches full rank, or when a layer adds nothing.
pub fn bracket_closure(gens: &[VectorField], max_depth: usize, probes: &[Vec<Rational>]) -> Result<BracketFlag> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let n = match gens.first() {
        Some(g) => g.chart().dim(),
        None => {
            return Ok(BracketFlag {
                generators: Vec::new(),
                layers: vec![Vec::new()],
                max_depth,
                stabilized: true,
            })
        }
    };
    for p in probes {
        gens[0].chart().check_point(p)?;
    }

    let full_rank = |fields: &[VectorField]| -> Result<bool> {
        if probes.is_empty() {
            return Ok(false);
        }
        for p in probes {
            if eval_rank(fields, p)? < n {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let first: Vec<VectorField> = gens.to_vec();
    let mut coeffs: Vec<Coeffs> = first.iter().map(coefficients).collect();
    let mut rank = span_rank(&coeffs.iter().collect::<Vec<_>>());
    let mut layers = vec![first.clone()];
    let mut frontier = first;
    let mut stabilized = full_rank(&layers[0])?;

    while !stabilized && layers.len() < max_depth {
        let mut current = layers.last().unwrap().clone();
        let mut added = Vec::new();
        for x in gens {
            for w in &frontier {
                let b = lie_bracket(x, w)?;
                if b.is_zero() {
                    continue;
                }
                let c = coefficients(&b);
                let mut refs: Vec<&Coeffs> = coeffs.iter().collect();
                refs.push(&c);
                let r = span_rank(&refs);
                if r > rank {
                    rank = r;
                    coeffs.push(c);
                    added.push(b);
                }
            }
        }
        if added.is_empty() {
            stabilized = true;
            break;
        }
        current.extend(added.iter().cloned());
        stabilized = full_rank(&current)?;
        layers.push(current);
        frontier = added;
    }

    Ok(BracketFlag {
        generators: gens.to_vec(),
        layers,
        max_depth,
        stabilized,
    })
}

pub fn growth_vector(flag: &BracketFlag, x: &[Rational], target_dim: usize) -> Result<GrowthVector> {
    if let Some(g) = flag.generators.first() {
        g.chart().check_point(x)?;
        if target_dim > g.chart().dim() {
            return Err(Error::InvalidArgument(format!(
                "target dimension {target_dim} exceeds chart dimension {}",
                g.chart().dim()
            )));
        }
    }
    let dims = flag
        .layers
        .iter()
        .map(|l| eval_rank(l, x))
        .collect::<Result<Vec<_>>>()?;
    let step = dims.iter().position(|&d| d >= target_dim).map(|m| m + 1);
    Ok(GrowthVector {
        point: x.to_vec(),
        dims,
        step,
    })
}

pub fn growth_vectors(flag: &BracketFlag, points: &[Vec<Rational>], target_dim: usize) -> Result<Vec<GrowthVector>> {
    par::map_slice(points, |p| growth_vector(flag, p, target_dim))
        .into_iter()
        .collect()
}

/// Regular when the final-layer rank is the same at every sample.
pub fn regularity_check(flag: &BracketFlag, samples: &[Vec<Rational>]) -> Result<Regularity> {
    if !flag.stabilized {
        return Err(Error::FlagNotStabilized);
    }
    if let Some(g) = flag.generators.first() {
        for p in samples {
            g.chart().check_point(p)?;
        }
    }
    let ranks = par::map_slice(samples, |p| eval_rank(flag.final_layer(), p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let top = ranks.iter().copied().max().unwrap_or(0);
    let witnesses: Vec<Vec<Rational>> = samples
        .iter()
        .zip(&ranks)
        .filter(|(_, &r)| r != top)
        .map(|(p, _)| p.clone())
        .collect();
    if witnesses.is_empty() {
        Ok(Regularity::Regular(top))
    } else {
        Ok(Regularity::Irregular { rank: top, witnesses })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::rational_int;
    use crate::vfield::{Axis, Chart};
    use std::sync::Arc;

    fn chart(n: usize) -> Arc<Chart> {
        let names = ["x", "y", "z"][..n].iter().map(|s| s.to_string()).collect();
        let axes = (0..n)
            .map(|_| Axis::interval(rational_int(-2), rational_int(2)).unwrap())
            .collect();
        Arc::new(Chart::new(names, axes).unwrap())
    }

    fn gens(c: &Arc<Chart>, g: &[&[&str]]) -> Vec<VectorField> {
        g.iter().map(|s| VectorField::parse(c, s).unwrap()).collect()
    }

    fn pt(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&a| rational_int(a)).collect()
    }

    #[test]
    fn heisenberg() {
        let c = chart(3);
        let g = gens(&c, &[&["1", "0", "-1/2*y"], &["0", "1", "1/2*x"]]);
        let f = bracket_closure(&g, 4, &[pt(&[0, 0, 0])]).unwrap();
        assert!(f.stabilized());
        assert_eq!(f.depth(), 2);
        assert_eq!(f.layers()[1][2], VectorField::coordinate(&c, 2));
        let gv = growth_vector(&f, &pt(&[0, 0, 0]), 3).unwrap();
        assert_eq!((gv.dims, gv.step), (vec![2, 3], Some(2)));
    }

    #[test]
    fn spanning_frame_is_one_layer() {
        let c = chart(3);
        let g = gens(&c, &[&["1", "0", "0"], &["0", "1", "0"], &["0", "0", "1"]]);
        let f = bracket_closure(&g, 2, &[pt(&[1, 1, 1])]).unwrap();
        assert!(f.stabilized());
        assert_eq!(growth_vector(&f, &pt(&[1, 1, 1]), 3).unwrap().dims, vec![3]);
    }

    #[test]
    fn martinet() {
        let c = chart(3);
        let g = gens(&c, &[&["1", "0", "0"], &["0", "1", "x^2"]]);
        let f = bracket_closure(&g, 4, &[pt(&[0, 0, 0])]).unwrap();
        assert!(f.stabilized());
        assert_eq!(growth_vector(&f, &pt(&[0, 0, 0]), 3).unwrap().dims, vec![2, 2, 3]);
        assert_eq!(growth_vector(&f, &pt(&[1, 0, 0]), 3).unwrap().dims, vec![2, 3, 3]);
    }

    #[test]
    fn grushin_and_line_field() {
        let c = chart(2);
        let g = gens(&c, &[&["1", "0"], &["0", "x"]]);
        let f = bracket_closure(&g, 8, &[pt(&[0, 0])]).unwrap();
        let o = growth_vector(&f, &pt(&[0, 0]), 2).unwrap();
        assert_eq!((o.dims, o.step), (vec![1, 2], Some(2)));
        let o = growth_vector(&f, &pt(&[1, 0]), 2).unwrap();
        assert_eq!((o.dims, o.step), (vec![2, 2], Some(1)));
        let samples: Vec<_> = (-1..=1).flat_map(|a| (-1..=1).map(move |b| pt(&[a, b]))).collect();
        assert_eq!(regularity_check(&f, &samples).unwrap(), Regularity::Regular(2));

        let line = gens(&c, &[&["1", "0"]]);
        let f = bracket_closure(&line, 8, &[pt(&[0, 0])]).unwrap();
        assert!(f.stabilized());
        assert_eq!(growth_vector(&f, &pt(&[0, 0]), 2).unwrap().step, None);
    }

    #[test]
    fn euler_field_is_irregular() {
        let c = chart(1);
        let g = gens(&c, &[&["x"]]);
        let f = bracket_closure(&g, 8, &[pt(&[1])]).unwrap();
        match regularity_check(&f, &[pt(&[0]), pt(&[1])]).unwrap() {
            Regularity::Irregular { rank, witnesses } => {
                assert_eq!(rank, 1);
                assert_eq!(witnesses, vec![pt(&[0])]);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn high_order_contact_exhausts_depth() {
        let c = chart(2);
        let g = gens(&c, &[&["1", "0"], &["0", "x^10"]]);
        let f = bracket_closure(&g, DEFAULT_MAX_DEPTH, &[pt(&[0, 0])]).unwrap();
        assert!(!f.stabilized());
        assert_eq!(f.depth(), DEFAULT_MAX_DEPTH);
        assert!(matches!(regularity_check(&f, &[pt(&[0, 0])]), Err(Error::FlagNotStabilized)));
    }

    #[test]
    fn span_pruning_drops_dependent_brackets() {
        let c = chart(2);
        // [∂x, x∂y] = ∂y and [∂y, x∂y] = 0; the second generator's layer adds only ∂y
        let g = gens(&c, &[&["1", "0"], &["0", "x"], &["0", "1"]]);
        let f = bracket_closure(&g, 8, &[]).unwrap();
        assert!(f.stabilized());
        assert_eq!(f.depth(), 1);
    }
}
