//! Movable objects of global placement: whole macros and free instances.

use crate::model::Netlist;

/// Movable object of one instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Member {
    pub obj: usize,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objects {
    /// Object and pin offset of each instance; `None` for fixed instances.
    pub member: Vec<Option<Member>>,
    /// Instances of each object.
    pub insts: Vec<Vec<usize>>,
    /// Vertical extent of each object in sites.
    pub height: Vec<f64>,
}

impl Objects {
    pub fn from_netlist(netlist: &Netlist) -> Self {
        let n = netlist.num_instances();
        let mut member = vec![None; n];
        let mut insts: Vec<Vec<usize>> = Vec::new();
        let mut height = Vec::new();
        let mut macro_obj = vec![None; netlist.macros.len()];
        for (i, inst) in netlist.instances.iter().enumerate() {
            if inst.fixed {
                continue;
            }
            let obj = match inst.macro_id {
                Some(m) => *macro_obj[m].get_or_insert_with(|| {
                    insts.push(Vec::new());
                    height.push(netlist.macros[m].height.max(1) as f64);
                    insts.len() - 1
                }),
                None => {
                    insts.push(Vec::new());
                    height.push(1.0);
                    insts.len() - 1
                }
            };
            insts[obj].push(i);
            member[i] = Some(Member { obj, dx: inst.offset.0 as f64, dy: inst.offset.1 as f64 });
        }
        Objects { member, insts, height }
    }

    pub fn len(&self) -> usize {
        self.insts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insts.is_empty()
    }

    /// Anchor coordinates of each object: the mean of `pos - offset` over its
    /// members.
    pub fn anchors(&self, xy: &[(f64, f64)]) -> Vec<(f64, f64)> {
        self.insts
            .iter()
            .map(|members| {
                let k = members.len() as f64;
                let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                    let m = self.member[i].expect("movable");
                    (sx + xy[i].0 - m.dx, sy + xy[i].1 - m.dy)
                });
                (sx / k, sy / k)
            })
            .collect()
    }

    /// Writes instance coordinates from object anchors.
    pub fn apply(&self, anchors: &[(f64, f64)], xy: &mut [(f64, f64)]) {
        for (i, m) in self.member.iter().enumerate() {
            if let Some(m) = m {
                let (ax, ay) = anchors[m.obj];
                xy[i] = (ax + m.dx, ay + m.dy);
            }
        }
    }
}
