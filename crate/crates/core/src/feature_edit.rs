//! Mitigation by rewriting sensitive tags (and optionally labels).

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{group_counts, BalanceCounts, CreditGraph, Group, Label, NodeId};
use crate::seeded_rng;

/// Number of majority nodes to move to the minority group: `O - X/2`.
pub fn compute_nc(counts: &BalanceCounts) -> Result<usize> {
    let x = counts.total;
    if !x.is_multiple_of(2) {
        return Err(Error::OddTotal(x));
    }
    if counts.majority < x / 2 {
        return Err(Error::GroupsInverted {
            majority: counts.majority,
            required: x / 2,
        });
    }
    Ok(counts.majority - x / 2)
}

/// `|G - X/4| + |B - X/4|` over the global label counts, exactly as written.
/// This is not in general the number of edits needed to reach `X/4` per cell;
/// see [`reassign_sensitive_and_label`] for the operational target.
pub fn compute_nc2(counts: &BalanceCounts) -> Result<usize> {
    let x = counts.total;
    if !x.is_multiple_of(4) {
        return Err(Error::NotDivisibleByFour(x));
    }
    let quarter = x / 4;
    Ok(counts.good.abs_diff(quarter) + counts.bad.abs_diff(quarter))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEdit {
    pub node: NodeId,
    pub from: (Group, Label),
    pub to: (Group, Label),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub nc: Option<usize>,
    pub nc2: Option<usize>,
    pub edits: Vec<NodeEdit>,
}

/// Flips the sensitive tag of `NC` uniformly chosen majority nodes.
pub fn reassign_sensitive_random(graph: &CreditGraph, seed: u64) -> Result<(CreditGraph, EditRecord)> {
    let nc = compute_nc(&group_counts(graph))?;
    let majority: Vec<usize> = (0..graph.len())
        .filter(|&i| graph.groups()[i] == Group::Majority)
        .collect();
    let mut rng = seeded_rng(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, majority.len(), nc)
        .into_iter()
        .map(|j| majority[j])
        .collect();
    picked.sort_unstable();

    let mut groups = graph.groups().to_vec();
    let mut edits = Vec::with_capacity(nc);
    for i in picked {
        let label = graph.labels()[i];
        groups[i] = Group::Minority;
        edits.push(NodeEdit {
            node: graph.node_ids()[i],
            from: (Group::Majority, label),
            to: (Group::Minority, label),
        });
    }
    let out = graph.clone().with_groups(groups)?;
    Ok((
        out,
        EditRecord {
            nc: Some(nc),
            nc2: None,
            edits,
        },
    ))
}

const CELLS: [(Group, Label); 4] = [
    (Group::Majority, Label::Bad),
    (Group::Majority, Label::Good),
    (Group::Minority, Label::Bad),
    (Group::Minority, Label::Good),
];

/// How many nodes to move between each ordered pair of cells so every cell
/// reaches `target`. Moves are planned in three passes: sensitive-tag flips
/// within a label, then label flips within a group, then double flips. The
/// node count moved always equals the total surplus; the passes keep the
/// number of changed attributes minimal.
pub(crate) fn plan_moves(counts: &BalanceCounts, target: usize) -> Vec<((Group, Label), (Group, Label), usize)> {
    let mut surplus: Vec<i64> = CELLS
        .iter()
        .map(|&(g, l)| counts.cell(g, l) as i64 - target as i64)
        .collect();
    let idx = |c: (Group, Label)| CELLS.iter().position(|&x| x == c).unwrap();
    let mut moves = Vec::new();
    let passes: [fn((Group, Label)) -> (Group, Label); 3] = [
        |(g, l)| (g.flipped(), l),
        |(g, l)| (g, l.flipped()),
        |(g, l)| (g.flipped(), l.flipped()),
    ];
    for pass in passes {
        for &from in &CELLS {
            let to = pass(from);
            let (fi, ti) = (idx(from), idx(to));
            let amount = surplus[fi].min(-surplus[ti]);
            if amount > 0 {
                surplus[fi] -= amount;
                surplus[ti] += amount;
                moves.push((from, to, amount as usize));
            }
        }
    }
    debug_assert!(surplus.iter().all(|&s| s == 0));
    moves
}

/// Rewrites tags and labels so every (group, label) cell holds `X/4` nodes,
/// changing as few nodes as possible. Which nodes move out of a surplus cell
/// is chosen uniformly at random.
pub fn reassign_sensitive_and_label(graph: &CreditGraph, seed: u64) -> Result<(CreditGraph, EditRecord)> {
    let counts = group_counts(graph);
    let nc2 = compute_nc2(&counts)?;
    let target = counts.total / 4;
    let mut rng = seeded_rng(seed);

    let mut members: Vec<Vec<usize>> = CELLS
        .iter()
        .map(|&(g, l)| {
            (0..graph.len())
                .filter(|&i| graph.groups()[i] == g && graph.labels()[i] == l)
                .collect()
        })
        .collect();
    // shuffle the pick order within each cell once, then take from the front
    for cell in members.iter_mut() {
        let order = index::sample(&mut rng, cell.len(), cell.len());
        *cell = order.into_iter().map(|j| cell[j]).collect();
    }

    let mut groups = graph.groups().to_vec();
    let mut labels = graph.labels().to_vec();
    let mut edits = Vec::new();
    let mut taken = [0usize; 4];
    for (from, to, amount) in plan_moves(&counts, target) {
        let fi = CELLS.iter().position(|&c| c == from).unwrap();
        for &i in &members[fi][taken[fi]..taken[fi] + amount] {
            groups[i] = to.0;
            labels[i] = to.1;
            edits.push(NodeEdit {
                node: graph.node_ids()[i],
                from,
                to,
            });
        }
        taken[fi] += amount;
    }
    edits.sort_by_key(|e| e.node);
    let out = graph.clone().with_groups(groups)?.with_labels(labels)?;
    Ok((
        out,
        EditRecord {
            nc: None,
            nc2: Some(nc2),
            edits,
        },
    ))
}
