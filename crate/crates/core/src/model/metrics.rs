use crate::error::{Error, Result};

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Empty("accuracy of an empty set".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Mean over parts of `|pred ∩ true| / |pred ∪ true|`; a part absent from both counts as 1.
pub fn shape_iou(predicted: &[usize], truth: &[usize], parts: usize) -> Result<f64> {
    if predicted.is_empty() || parts == 0 {
        return Err(Error::Empty("IoU of an empty shape".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let mut total = 0.0;
    for part in 0..parts {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&p, &t) in predicted.iter().zip(truth) {
            let (a, b) = (p == part, t == part);
            inter += usize::from(a && b);
            union += usize::from(a || b);
        }
        total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    Ok(total / parts as f64)
}

/// Per-shape IoU averaged within each category, then across categories.
pub fn mean_iou(shapes: &[(usize, Vec<usize>, Vec<usize>)], parts: usize) -> Result<f64> {
    if shapes.is_empty() {
        return Err(Error::Empty("mIoU of an empty dataset".into()));
    }
    let mut per_cat: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for (cat, pred, truth) in shapes {
        let e = per_cat.entry(*cat).or_default();
        e.0 += shape_iou(pred, truth, parts)?;
        e.1 += 1;
    }
    Ok(per_cat.values().map(|(s, n)| s / *n as f64).sum::<f64>() / per_cat.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_four_point_case() {
        // Part 0: pred {0,1}, true {0}: 1/2. Part 1: pred {2,3}, true {1,2,3}: 2/3.
        let iou = shape_iou(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert!((iou - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn categories_are_averaged_after_shapes() {
        let shapes = vec![
            (0, vec![0, 0], vec![0, 0]),
            (0, vec![1, 1], vec![0, 0]),
            (1, vec![0, 1], vec![0, 1]),
        ];
        // Category 0: (1 + 0)/2; category 1: 1.
        assert!((mean_iou(&shapes, 2).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(mean_iou(&[], 2).is_err());
        assert_eq!(accuracy(&[1, 0, 1], &[1, 1, 1]).unwrap(), 2.0 / 3.0);
    }
}
