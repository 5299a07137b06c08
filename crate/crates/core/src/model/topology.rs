use std::collections::VecDeque;

use super::case::ElectricNetwork;

/// Rooted view of a radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTopology {
    /// Line feeding each bus; `None` for the root.
    pub parent_line: Vec<Option<usize>>,
    /// Lines leaving each bus towards its children (the set 𝒟ᵢ).
    pub child_lines: Vec<Vec<usize>>,
    /// Buses in breadth-first order from the root.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyError {
    LineCount { buses: usize, lines: usize },
    Unreachable(Vec<usize>),
    Cycle,
}

impl RadialTopology {
    /// Roots the line graph at `net.root`. Line orientation is ignored.
    pub fn build(net: &ElectricNetwork) -> Result<Self, TopologyError> {
        let n = net.buses.len();
        if net.lines.len() + 1 != n {
            return Err(TopologyError::LineCount {
                buses: n,
                lines: net.lines.len(),
            });
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, l) in net.lines.iter().enumerate() {
            adj[l.from].push((l.to, k));
            adj[l.to].push((l.from, k));
        }
        let mut parent_line = vec![None; n];
        let mut seen = vec![false; n];
        let mut child_lines = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([net.root]);
        seen[net.root] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &(j, k) in &adj[i] {
                if Some(k) == parent_line[i] {
                    continue;
                }
                if seen[j] {
                    return Err(TopologyError::Cycle);
                }
                seen[j] = true;
                parent_line[j] = Some(k);
                child_lines[i].push(k);
                queue.push_back(j);
            }
        }
        let missing: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();
        if !missing.is_empty() {
            return Err(TopologyError::Unreachable(missing));
        }
        Ok(RadialTopology {
            parent_line,
            child_lines,
            order,
        })
    }
}
