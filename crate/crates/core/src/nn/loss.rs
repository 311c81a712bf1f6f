use super::tensor::Tensor;
use crate::{Error, Result};

/// Row-wise softmax of a `[batch, classes]` tensor, max-subtracted.
pub fn softmax(logits: &Tensor) -> Tensor {
    let classes = *logits.shape().last().expect("rank >= 1");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Class index of each row of a one-hot `[batch, classes]` tensor.
pub fn one_hot_classes(labels: &Tensor) -> Result<Vec<usize>> {
    if labels.rank() != 2 {
        return Err(Error::Argument(format!("labels must be [batch, classes], got {:?}", labels.shape())));
    }
    let classes = labels.shape()[1];
    labels
        .data()
        .chunks_exact(classes)
        .enumerate()
        .map(|(r, row)| {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones == 1 && zeros == classes - 1 {
                Ok(row.iter().position(|&v| v == 1.0).unwrap())
            } else {
                Err(Error::Argument(format!("label row {r} is not one-hot: {row:?}")))
            }
        })
        .collect()
}

pub fn one_hot(classes: &[usize], n_classes: usize) -> Tensor {
    Tensor::from_fn([classes.len(), n_classes], |i| {
        (classes[i / n_classes] == i % n_classes) as u8 as f64
    })
}

/// Mean cross-entropy of softmax(logits) against one-hot labels, with the
/// analytic gradient `(softmax - label) / batch`.
pub fn softmax_xent(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape() != labels.shape() || logits.rank() != 2 {
        return Err(Error::Shape(format!(
            "logits {:?} vs labels {:?}",
            logits.shape(),
            labels.shape()
        )));
    }
    let targets = one_hot_classes(labels)?;
    let (loss, grad) = xent_from_indices(logits, &targets);
    Ok((loss, grad))
}

pub(crate) fn xent_from_indices(logits: &Tensor, targets: &[usize]) -> (f64, Tensor) {
    let classes = logits.shape()[1];
    let batch = targets.len() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (row, (&t, lrow)) in grad
        .data_mut()
        .chunks_exact_mut(classes)
        .zip(targets.iter().zip(logits.data().chunks_exact(classes)))
    {
        // log-sum-exp form keeps the loss finite for extreme logits
        let m = lrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + lrow.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - lrow[t];
        row[t] -= 1.0;
        row.iter_mut().for_each(|v| *v /= batch);
    }
    (loss / batch, grad)
}
