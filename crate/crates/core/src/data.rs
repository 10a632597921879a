use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of exogenous covariates per product-day.
pub const N_COVARIATES: usize = 4;

/// Daily history of one SKU at one distribution centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSeries {
    pub sku: usize,
    pub dc: usize,
    pub demand: Vec<f64>,
    /// Lead time an order placed on that day would have; `None` off epochs.
    pub leadtime: Vec<Option<usize>>,
    pub covariates: Vec<[f64; N_COVARIATES]>,
}

impl ProductSeries {
    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            demand: self.demand.iter().map(|d| d * gamma).collect(),
            ..self.clone()
        }
    }
}

/// All products of one problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub instance: usize,
    pub skus: usize,
    pub dcs: usize,
    pub products: Vec<ProductSeries>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    instance_id: usize,
    sku: usize,
    dc: usize,
    t: usize,
    demand: f64,
    leadtime: Option<usize>,
    x1: f64,
    x2: f64,
    x3: f64,
    x4: f64,
}

impl ScenarioSet {
    pub fn horizon(&self) -> usize {
        self.products.first().map_or(0, ProductSeries::len)
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            products: self.products.iter().map(|p| p.scaled(gamma)).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for p in &self.products {
            for t in 0..p.len() {
                let x = p.covariates[t];
                wtr.serialize(Row {
                    instance_id: self.instance,
                    sku: p.sku,
                    dc: p.dc,
                    t,
                    demand: p.demand[t],
                    leadtime: p.leadtime[t],
                    x1: x[0],
                    x2: x[1],
                    x3: x[2],
                    x4: x[3],
                })?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Rows must be grouped by product and ordered by `t` within a product.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut set: Option<ScenarioSet> = None;
        for row in rdr.deserialize() {
            let row: Row = row?;
            let s = set.get_or_insert_with(|| ScenarioSet {
                instance: row.instance_id,
                skus: 0,
                dcs: 0,
                products: Vec::new(),
            });
            if row.instance_id != s.instance {
                return Err(Error::Config(format!(
                    "mixed instances {} and {} in one file",
                    s.instance, row.instance_id
                )));
            }
            let same = s
                .products
                .last()
                .is_some_and(|p| p.sku == row.sku && p.dc == row.dc);
            if !same {
                s.products.push(ProductSeries {
                    sku: row.sku,
                    dc: row.dc,
                    demand: Vec::new(),
                    leadtime: Vec::new(),
                    covariates: Vec::new(),
                });
            }
            let p = s.products.last_mut().unwrap();
            if row.t != p.len() {
                return Err(Error::Config(format!(
                    "product ({}, {}) expected day {} but found {}",
                    row.sku,
                    row.dc,
                    p.len(),
                    row.t
                )));
            }
            if !(row.demand.is_finite() && row.demand >= 0.0) {
                return Err(Error::NegativeDemand(row.demand));
            }
            p.demand.push(row.demand);
            p.leadtime.push(row.leadtime);
            p.covariates.push([row.x1, row.x2, row.x3, row.x4]);
        }
        let mut set = set.ok_or(Error::Empty("scenario file has no rows"))?;
        set.skus = set.products.iter().map(|p| p.sku + 1).max().unwrap_or(0);
        set.dcs = set.products.iter().map(|p| p.dc + 1).max().unwrap_or(0);
        let len = set.horizon();
        if set.products.iter().any(|p| p.len() != len) {
            return Err(Error::Config("products have different horizons".into()));
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScenarioSet {
        let p = |sku, dc| ProductSeries {
            sku,
            dc,
            demand: vec![1.5, 0.0, 1.0 / 3.0],
            leadtime: vec![Some(2), None, Some(9)],
            covariates: vec![[0.1, 0.2, 0.3, 0.4]; 3],
        };
        ScenarioSet {
            instance: 3,
            skus: 2,
            dcs: 1,
            products: vec![p(0, 0), p(1, 0)],
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let set = sample();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("instance_id,sku,dc,t,demand,leadtime,x1,x2,x3,x4\n"));
        assert!(text.contains(",1,0.0,,0.1,"));
        assert_eq!(ScenarioSet::read_csv(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn rejects_gaps_in_days() {
        let csv = "instance_id,sku,dc,t,demand,leadtime,x1,x2,x3,x4\n0,0,0,1,1,,0,0,0,0\n";
        assert!(ScenarioSet::read_csv(csv.as_bytes()).is_err());
    }
}
