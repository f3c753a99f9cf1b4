use super::{Direction, NodeId, Ray};

/// One ray per lattice line for each requested direction, targets zero.
///
/// Horizontal rays run left to right along each row, vertical rays top to
/// bottom along each column. Down diagonals (`x - y` constant) are listed
/// from the bottom-left corner to the top-right corner and traverse top
/// left to bottom right; up diagonals (`x + y` constant) are listed from
/// the top-left corner and traverse bottom left to top right. Corner lines
/// of length one are included.
pub fn build_lattice_rays(width: usize, height: usize, directions: &[Direction]) -> Vec<Ray> {
    let id = |x: usize, y: usize| -> NodeId { y * width + x };
    let mut rays = Vec::new();
    for &dir in directions {
        match dir {
            Direction::Horizontal => {
                for y in 0..height {
                    rays.push(ray((0..width).map(|x| id(x, y)).collect(), dir));
                }
            }
            Direction::Vertical => {
                for x in 0..width {
                    rays.push(ray((0..height).map(|y| id(x, y)).collect(), dir));
                }
            }
            Direction::DiagDown => {
                for d in -(height as isize - 1)..width as isize {
                    let (mut x, mut y) = if d < 0 { (0, (-d) as usize) } else { (d as usize, 0) };
                    let mut nodes = Vec::new();
                    while x < width && y < height {
                        nodes.push(id(x, y));
                        x += 1;
                        y += 1;
                    }
                    rays.push(ray(nodes, dir));
                }
            }
            Direction::DiagUp => {
                for c in 0..width + height - 1 {
                    let x0 = c.saturating_sub(height - 1);
                    let mut nodes = Vec::new();
                    let mut x = x0;
                    while x < width && x <= c {
                        nodes.push(id(x, c - x));
                        x += 1;
                    }
                    rays.push(ray(nodes, dir));
                }
            }
            Direction::None => {}
        }
    }
    rays
}

fn ray(nodes: Vec<NodeId>, direction: Direction) -> Ray {
    Ray {
        nodes,
        target: 0,
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_of_two_by_two() {
        let rays = build_lattice_rays(2, 2, &[Direction::Horizontal]);
        assert_eq!(rays.len(), 2);
        assert_eq!(rays[0].nodes, vec![0, 1]);
        assert_eq!(rays[1].nodes, vec![2, 3]);
    }

    #[test]
    fn rows_and_columns() {
        let rays = build_lattice_rays(2, 2, &[Direction::Horizontal, Direction::Vertical]);
        assert_eq!(rays.len(), 4);
        assert!(rays.iter().all(|r| r.len() == 2));
        assert_eq!(rays[2].nodes, vec![0, 2]);
    }

    #[test]
    fn down_diagonals_of_three_by_three() {
        let rays = build_lattice_rays(3, 3, &[Direction::DiagDown]);
        let lens: Vec<usize> = rays.iter().map(Ray::len).collect();
        assert_eq!(lens, vec![1, 2, 3, 2, 1]);
        assert_eq!(rays[2].nodes, vec![0, 4, 8]);
        assert_eq!(rays[0].nodes, vec![6]);
    }

    #[test]
    fn up_diagonals_cover_grid_once() {
        let (w, h) = (4, 3);
        let rays = build_lattice_rays(w, h, &[Direction::DiagUp]);
        assert_eq!(rays.len(), w + h - 1);
        let mut seen = vec![0; w * h];
        for r in &rays {
            for pair in r.nodes.windows(2) {
                let (x0, y0) = (pair[0] % w, pair[0] / w);
                let (x1, y1) = (pair[1] % w, pair[1] / w);
                assert_eq!((x1, y1 + 1), (x0 + 1, y0));
            }
            for &u in &r.nodes {
                seen[u] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn every_direction_partitions_the_grid() {
        for (w, h) in [(1, 1), (1, 5), (5, 1), (3, 4), (6, 6)] {
            for dir in [Direction::Horizontal, Direction::Vertical, Direction::DiagDown, Direction::DiagUp] {
                let rays = build_lattice_rays(w, h, &[dir]);
                let mut seen = vec![0; w * h];
                rays.iter().flat_map(|r| &r.nodes).for_each(|&u| seen[u] += 1);
                assert!(seen.iter().all(|&c| c == 1), "{dir} on {w}x{h}");
            }
        }
    }
}
