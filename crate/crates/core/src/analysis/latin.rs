//! Latin-square counterbalancing.

/// Cyclic k×k Latin square: row `i`, column `j` holds condition `(i + j) mod k`.
pub fn latin_square(k: usize) -> Vec<Vec<usize>> {
    (0..k).map(|i| (0..k).map(|j| (i + j) % k).collect()).collect()
}

/// Orderings for `n` participants, cycling through the square's rows.
pub fn latin_square_orders(k: usize, n: usize) -> Vec<Vec<usize>> {
    let square = latin_square(k);
    (0..n).map(|p| square[p % k].clone()).collect()
}

/// `counts[c][pos]`: how many orderings put condition `c` at position `pos`.
pub fn position_counts(orders: &[Vec<usize>], k: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0; k]; k];
    for order in orders {
        for (pos, &c) in order.iter().enumerate() {
            counts[c][pos] += 1;
        }
    }
    counts
}

/// Letters for display: 0 → A, 1 → B, ...
pub fn order_label(order: &[usize]) -> String {
    order
        .iter()
        .map(|&c| char::from_u32('A' as u32 + c as u32).unwrap_or('?'))
        .collect()
}
