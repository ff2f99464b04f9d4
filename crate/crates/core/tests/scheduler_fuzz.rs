//! Randomized DAGs: every run is a valid topological order, executes each
//! task once, and terminates.

use std::sync::atomic::{AtomicUsize, Ordering};

use randutv::scheduler::{execute, validate_trace, Dependent, TaskGraph};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Node {
    reads: Vec<u32>,
    writes: Vec<u32>,
}

impl Dependent for Node {
    type Id = u32;
    fn reads(&self) -> &[u32] {
        &self.reads
    }
    fn writes(&self) -> &[u32] {
        &self.writes
    }
    fn label(&self) -> String {
        "node".into()
    }
}

struct Draw(StdRng);

impl Draw {
    fn new(seed: u64) -> Self {
        Draw(StdRng::seed_from_u64(seed))
    }

    fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }
}

fn random_graph(d: &mut Draw) -> TaskGraph<Node> {
    let n = 1 + d.below(200);
    let blocks = 1 + d.below(40) as u32;
    let nodes = (0..n)
        .map(|_| {
            let mut ids: Vec<u32> = (0..1 + d.below(4)).map(|_| d.below(blocks as usize) as u32).collect();
            ids.sort_unstable();
            ids.dedup();
            let split = d.below(ids.len() + 1);
            Node {
                reads: ids[..split].to_vec(),
                writes: ids[split..].to_vec(),
            }
        })
        .collect();
    TaskGraph::build(nodes).unwrap()
}

#[test]
fn thousand_random_dags() {
    let mut d = Draw::new(77);
    for round in 0..1000 {
        let g = random_graph(&mut d);
        let workers = 1 + d.below(8);
        let ran: Vec<AtomicUsize> = (0..g.len()).map(|_| AtomicUsize::new(0)).collect();
        let events = execute(&g, workers, |t, _| {
            ran[t].fetch_add(1, Ordering::SeqCst);
            Ok(())
        })
        .unwrap();
        validate_trace(&g, &events).unwrap_or_else(|e| panic!("round {round}: {e}"));
        assert!(ran.iter().all(|c| c.load(Ordering::SeqCst) == 1), "round {round}");
        for (a, b) in g.edges() {
            assert!(a < b);
        }
        if workers == 1 {
            let order: Vec<usize> = events.iter().map(|e| e.task).collect();
            assert_eq!(order, (0..g.len()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn conflicting_pairs_are_ordered() {
    // Brute force: any two tasks sharing a block with at least one writer are
    // connected by a path.
    let mut d = Draw::new(5);
    for _ in 0..50 {
        let g = random_graph(&mut d);
        let n = g.len();
        let mut reach = vec![vec![false; n]; n];
        for a in (0..n).rev() {
            for &b in g.successors(a) {
                reach[a][b] = true;
                let via = reach[b].clone();
                for (r, v) in reach[a].iter_mut().zip(via) {
                    *r |= v;
                }
            }
        }
        let nodes = g.nodes();
        for a in 0..n {
            for b in a + 1..n {
                let conflict = nodes[a].writes.iter().any(|x| nodes[b].reads.contains(x) || nodes[b].writes.contains(x))
                    || nodes[b].writes.iter().any(|x| nodes[a].reads.contains(x));
                if conflict {
                    assert!(reach[a][b], "{a} -> {b} missing");
                }
            }
        }
    }
}
