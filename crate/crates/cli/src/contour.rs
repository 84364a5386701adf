//! Marching squares on a regular lattice, with segments joined into polylines.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    /// Closed polylines repeat their first point at the end.
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

/// Cell edges are named by the lattice edge they sit on so neighbouring
/// cells agree on crossing points exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    /// Between `(i, j)` and `(i + 1, j)`.
    H(usize, usize),
    /// Between `(i, j)` and `(i, j + 1)`.
    V(usize, usize),
}

/// Level set `f = level` of lattice values; `values[i + nx * j]` sits at
/// `(xs[i], ys[j])`.
pub fn marching_squares(values: &[f64], xs: &[f64], ys: &[f64], level: f64) -> Vec<Polyline> {
    let (nx, ny) = (xs.len(), ys.len());
    assert_eq!(values.len(), nx * ny, "value grid does not match axes");
    let f = |i: usize, j: usize| values[i + nx * j] - level;
    let below = |i: usize, j: usize| f(i, j) < 0.0;

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            // bottom, right, top, left
            let edges = [
                Edge::H(i, j),
                Edge::V(i + 1, j),
                Edge::H(i, j + 1),
                Edge::V(i, j),
            ];
            let corners = [
                below(i, j),
                below(i + 1, j),
                below(i + 1, j + 1),
                below(i, j + 1),
            ];
            let cut: Vec<usize> = (0..4)
                .filter(|&k| corners[k] != corners[(k + 1) % 4])
                .collect();
            match cut.len() {
                2 => segments.push((edges[cut[0]], edges[cut[1]])),
                4 => {
                    let center = 0.25 * (f(i, j) + f(i + 1, j) + f(i + 1, j + 1) + f(i, j + 1));
                    if (center < 0.0) == corners[0] {
                        // bottom-left and top-right corners connect through the middle
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }

    let point = |e: Edge| -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (f0, f1) = (f(i0, j0), f(i1, j1));
        let t = f0 / (f0 - f1);
        [
            xs[i0] + t * (xs[i1] - xs[i0]),
            ys[j0] + t * (ys[j1] - ys[j0]),
        ]
    };

    let mut incident: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(k);
        incident.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (first, mut tail) = segments[start];
        let mut chain = vec![first, tail];
        let closed = loop {
            let next = incident[&tail].iter().copied().find(|&k| !used[k]);
            let Some(k) = next else { break false };
            used[k] = true;
            let (a, b) = segments[k];
            tail = if a == tail { b } else { a };
            chain.push(tail);
            if tail == first {
                break true;
            }
        };
        if !closed {
            let mut head = first;
            let mut prefix = Vec::new();
            while let Some(k) = incident[&head].iter().copied().find(|&k| !used[k]) {
                used[k] = true;
                let (a, b) = segments[k];
                head = if a == head { b } else { a };
                prefix.push(head);
            }
            prefix.reverse();
            prefix.extend(chain);
            chain = prefix;
        }
        out.push(Polyline {
            points: chain.into_iter().map(point).collect(),
            closed,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn circle_is_one_closed_loop() {
        let xs = lattice(61, -2.0, 2.0);
        let ys = lattice(41, -2.0, 2.0);
        let vals: Vec<f64> = ys
            .iter()
            .flat_map(|y| xs.iter().map(move |x| (x * x + y * y).sqrt()))
            .collect();
        let lines = marching_squares(&vals, &xs, &ys, 1.0);
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert!(l.closed);
        assert_eq!(l.points.first(), l.points.last());
        for p in &l.points {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn clipped_contour_is_open() {
        let xs = lattice(21, 0.0, 2.0);
        let ys = lattice(21, 0.0, 2.0);
        let vals: Vec<f64> = ys
            .iter()
            .flat_map(|y| xs.iter().map(move |x| (x * x + y * y).sqrt()))
            .collect();
        let lines = marching_squares(&vals, &xs, &ys, 1.0);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].closed);
        let (a, b) = (lines[0].points[0], *lines[0].points.last().unwrap());
        // ends sit on the two axes
        assert!(a[0].abs() < 1e-12 || a[1].abs() < 1e-12);
        assert!(b[0].abs() < 1e-12 || b[1].abs() < 1e-12);
    }

    #[test]
    fn two_blobs_two_loops() {
        let xs = lattice(81, -4.0, 4.0);
        let ys = lattice(41, -2.0, 2.0);
        let vals: Vec<f64> = ys
            .iter()
            .flat_map(|y| {
                xs.iter().map(move |x| {
                    let a = ((x + 2.0).powi(2) + y * y).sqrt();
                    let b = ((x - 2.0).powi(2) + y * y).sqrt();
                    a.min(b)
                })
            })
            .collect();
        let lines = marching_squares(&vals, &xs, &ys, 1.0);
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.closed));
    }
}
