use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Rank of `label` when classes are ordered by descending probability,
/// equal probabilities ordered by class index. Rank 0 is the top class.
pub fn rank_of(row: &[f64], label: usize) -> usize {
    let p = row[label];
    row.iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count()
}

/// Indices of the `k` most probable classes, most probable first.
pub fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Rows whose label is among the `k` most probable classes. `None` labels never hit.
pub fn topk_hits(probs: &Matrix, labels: &[Option<u32>], k: usize) -> Result<usize> {
    check_k(probs, labels.len(), k)?;
    Ok(labels
        .iter()
        .enumerate()
        .filter(|(i, l)| l.is_some_and(|l| rank_of(probs.row(*i), l as usize) < k))
        .count())
}

pub fn topk_accuracy(probs: &Matrix, labels: &[u32], k: usize) -> Result<f64> {
    let labels: Vec<Option<u32>> = labels.iter().map(|&l| Some(l)).collect();
    if labels.is_empty() {
        return Err(Error::data("top-k accuracy of zero rows"));
    }
    Ok(topk_hits(probs, &labels, k)? as f64 / labels.len() as f64)
}

fn check_k(probs: &Matrix, n: usize, k: usize) -> Result<()> {
    if k == 0 || k > probs.cols() {
        return Err(Error::config(format!(
            "k = {k} outside 1..={}",
            probs.cols()
        )));
    }
    if probs.rows() != n {
        return Err(Error::data(format!(
            "{} probability rows for {n} labels",
            probs.rows()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_ranked_label() {
        let p = Matrix::from_vec(1, 3, vec![0.5, 0.3, 0.2]);
        assert_eq!(topk_accuracy(&p, &[1], 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&p, &[1], 2).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&p, &[2], 3).unwrap(), 1.0);
        assert!(matches!(topk_accuracy(&p, &[1], 4), Err(Error::Config(_))));
        assert!(matches!(topk_accuracy(&p, &[1], 0), Err(Error::Config(_))));
    }

    #[test]
    fn uniform_rows_favor_class_zero() {
        let p = Matrix::from_vec(2, 4, vec![0.25; 8]);
        assert_eq!(topk_accuracy(&p, &[0, 1], 1).unwrap(), 0.5);
        assert_eq!(top_k(p.row(0), 2), vec![0, 1]);
    }

    #[test]
    fn unknown_labels_miss() {
        let p = Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.9]);
        assert_eq!(topk_hits(&p, &[None, Some(1)], 2).unwrap(), 1);
    }
}
