use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{CellValue, ValueGrid};
use crate::error::{Error, Result};
use crate::grid::GridIndex;

/// 4-connected shortest path avoiding obstacle cells, Manhattan heuristic.
///
/// Returns the cells from `start` to `goal` inclusive, or an empty path when
/// the goal is unreachable. Among equal `f` values the node with the smaller
/// `(a, b)` is expanded first, which makes the returned path deterministic.
pub fn astar(values: &ValueGrid, start: GridIndex, goal: GridIndex) -> Result<Vec<GridIndex>> {
    for p in [start, goal] {
        if !values.contains(p) {
            return Err(Error::IndexOutOfBounds(p));
        }
        if values.get(p) == CellValue::Obstacle {
            return Err(Error::ObstacleCell(p));
        }
    }
    let n = values.width() * values.height();
    let mut g = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s = values.linear(start);
    g[s] = 0;
    heap.push(Reverse((start.manhattan(&goal), start.a, start.b)));
    while let Some(Reverse((_, a, b))) = heap.pop() {
        let cur = GridIndex::new(a, b);
        let ci = values.linear(cur);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if cur == goal {
            let mut path = vec![cur];
            let mut i = ci;
            while parent[i] != usize::MAX {
                i = parent[i];
                path.push(values.index(i));
            }
            path.reverse();
            return Ok(path);
        }
        for nb in values.neighbours4(cur) {
            let ni = values.linear(nb);
            if closed[ni] || values.get(nb) == CellValue::Obstacle {
                continue;
            }
            let ng = g[ci] + 1;
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = ci;
                heap.push(Reverse((ng + nb.manhattan(&goal), nb.a, nb.b)));
            }
        }
    }
    Ok(Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_grid_cost_is_manhattan() {
        let v = ValueGrid::filled(5, 5, CellValue::Unexplored);
        let p = astar(&v, GridIndex::new(1, 1), GridIndex::new(5, 5)).unwrap();
        assert_eq!(p.len() - 1, 8);
        assert!(p.windows(2).all(|w| w[0].is_4_adjacent(&w[1])));
        assert_eq!(astar(&v, GridIndex::new(3, 3), GridIndex::new(3, 3)).unwrap().len(), 1);
    }

    #[test]
    fn walled_goal_is_unreachable() {
        let mut v = ValueGrid::filled(5, 5, CellValue::Unexplored);
        for c in [(4, 5), (5, 4), (4, 4)] {
            v.set(GridIndex::new(c.0, c.1), CellValue::Obstacle);
        }
        assert!(astar(&v, GridIndex::new(1, 1), GridIndex::new(5, 5)).unwrap().is_empty());
    }

    #[test]
    fn obstacle_endpoints_are_errors() {
        let mut v = ValueGrid::filled(3, 3, CellValue::Unexplored);
        v.set(GridIndex::new(2, 2), CellValue::Obstacle);
        assert!(astar(&v, GridIndex::new(2, 2), GridIndex::new(1, 1)).is_err());
        assert!(astar(&v, GridIndex::new(1, 1), GridIndex::new(2, 2)).is_err());
        assert!(astar(&v, GridIndex::new(1, 1), GridIndex::new(4, 1)).is_err());
    }

    fn bfs_cost(v: &ValueGrid, s: GridIndex, t: GridIndex) -> Option<usize> {
        let mut dist = std::collections::HashMap::from([(s, 0usize)]);
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(c) = q.pop_front() {
            if c == t {
                return dist.get(&c).copied();
            }
            let d = dist[&c];
            for n in v.neighbours4(c) {
                if v.get(n) != CellValue::Obstacle && !dist.contains_key(&n) {
                    dist.insert(n, d + 1);
                    q.push_back(n);
                }
            }
        }
        None
    }

    proptest::proptest! {
        #[test]
        fn cost_equals_breadth_first(bits in proptest::collection::vec(proptest::bool::weighted(0.3), 15 * 12),
                                     s in 0usize..180, t in 0usize..180) {
            let mut v = ValueGrid::filled(15, 12, CellValue::Unexplored);
            for (i, b) in bits.iter().enumerate() {
                if *b && i != s && i != t {
                    v.set(v.index(i), CellValue::Obstacle);
                }
            }
            let (s, t) = (v.index(s), v.index(t));
            let p = astar(&v, s, t).unwrap();
            match bfs_cost(&v, s, t) {
                None => proptest::prop_assert!(p.is_empty()),
                Some(d) => {
                    proptest::prop_assert_eq!(p.len(), d + 1);
                    proptest::prop_assert!(p.windows(2).all(|w| w[0].is_4_adjacent(&w[1])));
                    proptest::prop_assert!(p.iter().all(|c| v.get(*c) != CellValue::Obstacle));
                }
            }
        }
    }
}
