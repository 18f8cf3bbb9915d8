use super::{labels_from_probs, MaskSchedule, ModelError, Segmenter};
use crate::autograd::Tensor;
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamDecision {
    pub index: usize,
    pub label: bool,
    pub probability: f64,
}

/// Incremental inference for a bounded-future schedule. The decision for
/// sentence `t` is emitted once sentence `t + c` has arrived, where `c` is
/// the schedule's future context; each step recomputes the forward pass
/// over the received prefix.
#[derive(Debug)]
pub struct StreamSession<'a, T: Scalar> {
    model: &'a Segmenter<T>,
    schedule: MaskSchedule,
    latency: usize,
    threshold: f64,
    vectors: Vec<T>,
    count: usize,
    emitted: usize,
    closed: bool,
}

impl<'a, T: Scalar> StreamSession<'a, T> {
    pub fn new(model: &'a Segmenter<T>, schedule: MaskSchedule, threshold: f64) -> Result<Self, ModelError> {
        let latency = schedule.future_context().ok_or(ModelError::OfflineStreaming)?;
        let schedule = schedule.with_layers(model.config.doc_layers)?;
        Ok(Self {
            model,
            schedule,
            latency,
            threshold,
            vectors: Vec::new(),
            count: 0,
            emitted: 0,
            closed: false,
        })
    }

    /// Latency in sentences.
    pub fn latency(&self) -> usize {
        self.latency
    }

    pub fn received(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, text: &str) -> Result<Vec<StreamDecision>, ModelError> {
        if self.closed {
            return Err(ModelError::SessionClosed);
        }
        let v = self.model.sentence_matrix(&self.model.prepare(&[text])?)?;
        self.push_vector(v.data())
    }

    /// Ingests a precomputed sentence vector.
    pub fn push_vector(&mut self, vector: &[T]) -> Result<Vec<StreamDecision>, ModelError> {
        if self.closed {
            return Err(ModelError::SessionClosed);
        }
        if vector.len() != self.model.config.sent_width {
            return Err(ModelError::BadConfig(format!(
                "sentence vector has {} values, expected {}",
                vector.len(),
                self.model.config.sent_width
            )));
        }
        self.vectors.extend_from_slice(vector);
        self.count += 1;
        if self.count <= self.latency {
            return Ok(Vec::new());
        }
        self.emit(self.count - self.latency, false)
    }

    /// End of input: emits the pending decisions and forces the last label.
    pub fn finish(&mut self) -> Result<Vec<StreamDecision>, ModelError> {
        if self.closed {
            return Err(ModelError::SessionClosed);
        }
        self.closed = true;
        if self.emitted == self.count {
            return Ok(Vec::new());
        }
        self.emit(self.count, true)
    }

    /// Runs the prefix forward and emits every decision below `upto`.
    fn emit(&mut self, upto: usize, last: bool) -> Result<Vec<StreamDecision>, ModelError> {
        let prefix = Tensor::new(vec![self.count, self.model.config.sent_width], self.vectors.clone())?;
        let probs = self.model.probabilities_from_vectors(&prefix, &self.schedule)?;
        let mut labels: Vec<bool> = probs.iter().map(|p| p.to_f64().unwrap_or(0.0) > self.threshold).collect();
        if last {
            labels = labels_from_probs(&probs, self.threshold);
        }
        let out = (self.emitted..upto)
            .map(|i| StreamDecision {
                index: i,
                label: labels[i],
                probability: probs[i].to_f64().unwrap_or(f64::NAN),
            })
            .collect();
        self.emitted = upto;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Vocab};

    fn model() -> Segmenter<f64> {
        let v = Vocab::build(["a b c d e f g h"], 1, 20);
        let mut m = Segmenter::init(ModelConfig::toy(v.len()), v, 1).unwrap();
        m.perturb(2, 0.3);
        m
    }

    #[test]
    fn emission_counts() {
        let m = model();
        let mut s = StreamSession::new(&m, MaskSchedule::causal(4), 0.5).unwrap();
        for t in 0..4 {
            let out = s.push("a b.").unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].index, t);
        }
        assert!(s.finish().unwrap().is_empty());
        assert_eq!(s.push("c."), Err(ModelError::SessionClosed));

        let mut s = StreamSession::new(&m, MaskSchedule::online(vec![2, 1], 4).unwrap(), 0.5).unwrap();
        let mut first = None;
        for t in 0..10 {
            if !s.push(&format!("{} c.", ["a", "b", "d"][t % 3])).unwrap().is_empty() && first.is_none() {
                first = Some(t + 1);
            }
        }
        assert_eq!(first, Some(4));
        let tail = s.finish().unwrap();
        assert_eq!(tail.iter().map(|d| d.index).collect::<Vec<_>>(), vec![7, 8, 9]);
        assert!(tail[2].label);
        assert_eq!(s.finish(), Err(ModelError::SessionClosed));
    }

    #[test]
    fn offline_schedule_rejected() {
        let m = model();
        assert!(matches!(StreamSession::new(&m, MaskSchedule::offline(4), 0.5), Err(ModelError::OfflineStreaming)));
    }

    #[test]
    fn short_input_flushes_everything() {
        let m = model();
        let mut s = StreamSession::new(&m, MaskSchedule::preset(5, 4).unwrap(), 0.5).unwrap();
        assert!(s.push("a.").unwrap().is_empty());
        assert!(s.push("b.").unwrap().is_empty());
        let out = s.finish().unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[1].label);
    }
}
