//! Small named networks used by tests, the acceptance runner and demos.
//!
//! Labels are `"1"`, `"2"`, … so node `i` has index `i - 1`.

use crate::network::WeightedDag;
use crate::rat::{int, Rat};

fn build(n: usize, edges: &[(usize, usize, Rat)]) -> WeightedDag {
    let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let e: Vec<(String, String, Rat)> = edges
        .iter()
        .map(|(a, b, w)| (a.to_string(), b.to_string(), w.clone()))
        .collect();
    WeightedDag::from_labeled(&labels, &e).expect("well-formed example")
}

fn ones(n: usize, edges: &[(usize, usize)]) -> WeightedDag {
    let e: Vec<(usize, usize, Rat)> = edges.iter().map(|&(a, b)| (a, b, int(1))).collect();
    build(n, &e)
}

/// Two sources, two sinks, crossing weights one half and one.
pub fn bipartite() -> WeightedDag {
    use crate::rat::ratio;
    build(
        4,
        &[
            (1, 3, ratio(1, 2)),
            (2, 3, int(1)),
            (1, 4, int(1)),
            (2, 4, ratio(1, 2)),
        ],
    )
}

pub fn half_butterfly() -> WeightedDag {
    use crate::rat::ratio;
    build(
        5,
        &[
            (1, 3, int(1)),
            (2, 3, ratio(1, 2)),
            (3, 4, int(3)),
            (3, 5, int(3)),
            (2, 5, int(4)),
        ],
    )
}

/// 1→4←2→5←3, unit weights.
pub fn cassiopeia() -> WeightedDag {
    ones(5, &[(1, 4), (2, 4), (2, 5), (3, 5)])
}

/// Sources 1, 2 feeding each of 3, 4, 5, unit weights.
pub fn tent() -> WeightedDag {
    ones(5, &[(1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5)])
}

pub fn umbrella() -> WeightedDag {
    let e = [
        (1, 2, 2),
        (1, 3, 2),
        (1, 7, 1),
        (4, 2, 2),
        (4, 6, 1),
        (4, 7, 1),
        (4, 3, 1),
        (5, 2, 1),
        (5, 6, 1),
        (5, 7, 1),
        (5, 3, 2),
    ];
    let e: Vec<(usize, usize, Rat)> = e.iter().map(|&(a, b, w)| (a, b, int(w))).collect();
    build(7, &e)
}

/// 1→2→4 and 1→3→4 with the given weights.
pub fn diamond(c21: Rat, c31: Rat, c42: Rat, c43: Rat) -> WeightedDag {
    build(4, &[(1, 2, c21), (1, 3, c31), (2, 4, c42), (3, 4, c43)])
}

/// 1→4←3→2←5←1, unit weights: the one connecting path between 1 and 2
/// given {4, 5} is never effective.
pub fn crossing() -> WeightedDag {
    ones(5, &[(1, 4), (3, 4), (3, 2), (5, 2), (1, 5)])
}

/// 1→2, 1→4, 3→4 with the given weights.
pub fn kite(c21: Rat, c41: Rat, c43: Rat) -> WeightedDag {
    build(4, &[(1, 2, c21), (1, 4, c41), (3, 4, c43)])
}

/// Index of the node labelled `i`.
pub const fn node(i: usize) -> usize {
    i - 1
}
