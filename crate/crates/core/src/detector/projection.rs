//! Projection of codeword-indexed messages onto the symbol alphabet of one
//! slot position and expansion back.
//!
//! Away from the inter-slot spill region a function node only sees the
//! symbol a tag places in a single slot. Codewords that share that symbol
//! are merged with `max*` so the node works on at most three candidates.

use super::maxstar::max_star_all;
use crate::codec::build_mapping;
use crate::error::{Error, Result};

/// Codeword grouping for one modulation order and slot position.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub order: usize,
    /// Slot position, 1 for the first non-zero slot of a codeword, 2 for the
    /// second.
    pub position: usize,
    /// Codeword indices per projected symbol, ascending within a group.
    pub groups: Vec<Vec<usize>>,
    /// Projected symbol index of each codeword.
    pub index_of: Vec<usize>,
}

impl Projection {
    pub fn new(order: usize, position: usize) -> Result<Self> {
        if position != 1 && position != 2 {
            return Err(Error::config(
                "position",
                position,
                "slot position must be 1 or 2",
            ));
        }
        let mapping = build_mapping(order, 1.0)?;
        let groups: Vec<Vec<usize>> = if order == 2 {
            vec![vec![0], vec![1]]
        } else {
            [1.0, 0.0, -1.0]
                .iter()
                .map(|&level| {
                    (0..order)
                        .filter(|&m| mapping.points[m][position - 1] == level)
                        .collect()
                })
                .collect()
        };
        let mut index_of = vec![0; order];
        for (u, g) in groups.iter().enumerate() {
            for &m in g {
                index_of[m] = u;
            }
        }
        Ok(Projection {
            order,
            position,
            groups,
            index_of,
        })
    }

    /// Number of projected symbols.
    pub fn size(&self) -> usize {
        self.groups.len()
    }

    pub fn project(&self, msg: &[f64]) -> Vec<f64> {
        assert_eq!(msg.len(), self.order);
        self.groups
            .iter()
            .map(|g| {
                let vals: Vec<f64> = g.iter().map(|&m| msg[m]).collect();
                max_star_all(&vals)
            })
            .collect()
    }

    pub fn expand(&self, msg: &[f64]) -> Vec<f64> {
        assert_eq!(msg.len(), self.size());
        self.index_of.iter().map(|&u| msg[u]).collect()
    }
}

/// Merges an `M`-length message onto the projected alphabet of `position`.
pub fn project_messages(msg: &[f64], order: usize, position: usize) -> Result<Vec<f64>> {
    let p = Projection::new(order, position)?;
    if msg.len() != order {
        return Err(Error::Dimension(format!(
            "message of length {} for order {order}",
            msg.len()
        )));
    }
    Ok(p.project(msg))
}

/// Broadcasts a projected message back onto all `M` codewords.
pub fn expand_messages(msg: &[f64], order: usize, position: usize) -> Result<Vec<f64>> {
    let p = Projection::new(order, position)?;
    if msg.len() != p.size() {
        return Err(Error::Dimension(format!(
            "projected message of length {} for order {order}",
            msg.len()
        )));
    }
    Ok(p.expand(msg))
}
