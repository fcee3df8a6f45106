use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One row of a schedule: where a task is now and where it should run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task_id: u64,
    /// Host before this decision; `None` for a new arrival.
    pub current: Option<usize>,
    pub host: usize,
}

impl Assignment {
    pub fn is_migration(&self) -> bool {
        matches!(self.current, Some(c) if c != self.host)
    }
}

/// Executable one-hot placement of `p` tasks on `m` hosts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    m: usize,
    rows: Vec<Assignment>,
}

impl Schedule {
    pub fn new(m: usize) -> Self {
        Self { m, rows: Vec::new() }
    }

    pub fn from_rows(m: usize, rows: Vec<Assignment>) -> Result<Self> {
        let mut s = Self::new(m);
        for r in rows {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, row: Assignment) -> Result<()> {
        if row.host >= self.m || row.current.is_some_and(|c| c >= self.m) {
            return Err(Error::schedule(format!(
                "task {} placed on host {} but m = {}",
                row.task_id, row.host, self.m
            )));
        }
        if self.rows.iter().any(|r| r.task_id == row.task_id) {
            return Err(Error::schedule(format!("task {} scheduled twice", row.task_id)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Assignment] {
        &self.rows
    }

    pub fn hosts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.host).collect()
    }

    /// Incumbent host per row, with arrivals mapped to their target.
    pub fn incumbents(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.current.unwrap_or(r.host)).collect()
    }

    /// `p × m` one-hot matrix.
    pub fn to_tensor(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.rows.len(), self.m]);
        for (i, r) in self.rows.iter().enumerate() {
            t.set(i, r.host, 1.0);
        }
        t
    }

    pub fn one_hot_rows(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|r| (0..self.m).map(|j| u8::from(j == r.host)).collect())
            .collect()
    }

    /// `(src, dst)` for every row that moves an existing task.
    pub fn migration_edges(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .filter(|r| r.is_migration())
            .map(|r| (r.current.unwrap_or(r.host), r.host))
            .collect()
    }

    pub fn migration_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_migration()).count()
    }

    /// Same tasks, new target hosts.
    pub fn with_hosts(&self, hosts: &[usize]) -> Result<Self> {
        if hosts.len() != self.rows.len() {
            return Err(Error::shape(format!(
                "{} placements for {} tasks",
                hosts.len(),
                self.rows.len()
            )));
        }
        let rows = self
            .rows
            .iter()
            .zip(hosts)
            .map(|(r, h)| Assignment { host: *h, ..*r })
            .collect();
        Self::from_rows(self.m, rows)
    }

    /// Every task stays where it currently is.
    pub fn stay(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| Assignment { host: r.current.unwrap_or(r.host), ..*r })
            .collect();
        Self { m: self.m, rows }
    }

    /// Number of tasks on each host.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.m];
        for r in &self.rows {
            occ[r.host] += 1;
        }
        occ
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> Schedule {
        Schedule::from_rows(
            3,
            vec![
                Assignment { task_id: 7, current: Some(0), host: 2 },
                Assignment { task_id: 8, current: None, host: 1 },
                Assignment { task_id: 9, current: Some(1), host: 1 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_and_edges() {
        let s = sched();
        assert_eq!(s.one_hot_rows(), vec![vec![0, 0, 1], vec![0, 1, 0], vec![0, 1, 0]]);
        assert_eq!(s.migration_edges(), vec![(0, 2)]);
        assert_eq!(s.occupancy(), vec![0, 2, 1]);
        assert_eq!(s.stay().hosts(), vec![0, 1, 1]);
        let t = s.to_tensor();
        assert_eq!(t.shape(), &[3, 3]);
        assert_eq!(t.data().iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut s = Schedule::new(2);
        assert!(s.push(Assignment { task_id: 1, current: None, host: 2 }).is_err());
        s.push(Assignment { task_id: 1, current: None, host: 1 }).unwrap();
        assert!(s.push(Assignment { task_id: 1, current: None, host: 0 }).is_err());
        assert!(s.with_hosts(&[0, 1]).is_err());
    }
}
