use serde::{Deserialize, Serialize};

use super::Session;
use crate::color::{color_for, ColorCode, ColorItem};
use crate::model::{
    ActionKind, ActionRef, ActionStatus, FlightPhase, IBlockId, ProcedureId, ProcedureKind,
};

/// Everything a display client renders. Colors are computed here; clients
/// never derive them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DisplayModel {
    pub tick: u64,
    pub page: FlightPhase,
    pub menu: Vec<MenuEntry>,
    /// The displayed procedure, i.e. the top of the stack.
    pub active: Option<ProcedureView>,
    pub stack: Vec<ProcedureId>,
    pub page_procedures: Vec<PageEntry>,
    pub popup: Option<PopupView>,
    pub queued_popups: Vec<ProcedureId>,
    pub reminder_bar: Vec<ReminderView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MenuEntry {
    pub phase: FlightPhase,
    pub current: bool,
    pub color: ColorCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PageStatus {
    Idle,
    Active,
    Suspended,
    Pending,
    Deferred,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PageEntry {
    pub procedure: ProcedureId,
    pub title: String,
    pub title_color: ColorCode,
    pub status: PageStatus,
    /// Last procedure opened on this page.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PopupView {
    pub procedure: ProcedureId,
    pub title: String,
    pub title_color: ColorCode,
    pub ecam: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReminderView {
    pub procedure: ProcedureId,
    pub title: String,
    pub title_color: ColorCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcedureView {
    pub procedure: ProcedureId,
    pub title: String,
    pub kind: ProcedureKind,
    pub title_color: ColorCode,
    pub iblocks: Vec<IBlockView>,
    /// Embedded procedures offered as links.
    pub links: Vec<ProcedureId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IBlockView {
    pub iblock: IBlockId,
    pub current: bool,
    /// Goal already reached.
    pub passed: bool,
    /// Offer the check-all bar: current, with something left to do.
    pub check_all: bool,
    pub lines: Vec<LineView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LineView {
    pub action: ActionRef,
    pub kind: ActionKind,
    pub text: String,
    pub color: ColorCode,
    pub status: ActionStatus,
    pub level2: Option<String>,
    pub level3: Option<String>,
    pub current: bool,
}

impl Session {
    pub fn display_model(&self) -> DisplayModel {
        let st = &self.st;
        let menu = FlightPhase::ALL
            .iter()
            .map(|&phase| MenuEntry { phase, current: phase == st.page, color: color_for(ColorItem::PhaseTitle) })
            .collect();
        let title_color = |p: usize| color_for(ColorItem::ProcedureTitle(self.set.procedures[p].kind));

        let page_procedures = self
            .set
            .page(st.page)
            .into_iter()
            .map(|p| {
                let proc = &self.set.procedures[p];
                let status = if st.stack.last().is_some_and(|f| f.proc == p) {
                    PageStatus::Active
                } else if self.on_stack(p) {
                    PageStatus::Suspended
                } else if st.deferred.iter().any(|d| d.proc == p) {
                    PageStatus::Deferred
                } else if st.popups.contains(&p) || st.ready.contains(&p) {
                    PageStatus::Pending
                } else if st.completed[p] {
                    PageStatus::Completed
                } else {
                    PageStatus::Idle
                };
                PageEntry {
                    procedure: proc.id.clone(),
                    title: proc.title.clone(),
                    title_color: title_color(p),
                    status,
                    selected: st.page_cursor.get(&st.page) == Some(&proc.id),
                }
            })
            .collect();

        let popup = st.popups.first().map(|&p| {
            let proc = &self.set.procedures[p];
            PopupView { procedure: proc.id.clone(), title: proc.title.clone(), title_color: title_color(p), ecam: proc.ecam }
        });
        let reminder_bar = st
            .deferred
            .iter()
            .map(|d| {
                let proc = &self.set.procedures[d.proc];
                ReminderView { procedure: proc.id.clone(), title: proc.title.clone(), title_color: title_color(d.proc) }
            })
            .collect();

        DisplayModel {
            tick: st.now,
            page: st.page,
            menu,
            active: st.stack.last().map(|f| self.view(f.proc)),
            stack: self.stack(),
            page_procedures,
            popup,
            queued_popups: st.popups.iter().skip(1).map(|&p| self.pid(p)).collect(),
            reminder_bar,
        }
    }

    /// Full view of any procedure, for browsing pages and links.
    pub fn procedure_view(&self, procedure: &str) -> Option<ProcedureView> {
        self.set.procedure_index(procedure).map(|p| self.view(p))
    }

    fn view(&self, p: usize) -> ProcedureView {
        let proc = &self.set.procedures[p];
        let frame = self.st.stack.iter().rev().find(|f| f.proc == p).copied();
        let perf = self.performance();
        let iblocks = proc
            .iblocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let current = frame.is_some_and(|f| f.iblock == b);
                let passed = frame.is_some_and(|f| b < f.iblock);
                let cursor = current.then(|| self.action_cursor(p, b));
                let statuses = &self.st.statuses[p][b];
                let lines = block
                    .actions
                    .iter()
                    .enumerate()
                    .map(|(a, action)| {
                        let status = statuses[a];
                        let mut text = action.label.clone();
                        if let (ActionKind::Note, Some(r)) = (action.kind, perf) {
                            text = text
                                .replace("{VAPP}", &format!("{:.0}", r.vapp))
                                .replace("{LDG_DIST}", &format!("{:.0}", r.landing_distance));
                        }
                        LineView {
                            action: self.aref(p, b, a),
                            kind: action.kind,
                            text,
                            color: color_for(ColorItem::Action { kind: action.kind, status }),
                            status,
                            level2: action.level2.clone(),
                            level3: action.level3.clone(),
                            current: cursor == Some(a),
                        }
                    })
                    .collect();
                IBlockView { iblock: block.id.clone(), current, passed, check_all: current && !self.check_all_done(p, b), lines }
            })
            .collect();
        ProcedureView {
            procedure: proc.id.clone(),
            title: proc.title.clone(),
            kind: proc.kind,
            title_color: color_for(ColorItem::ProcedureTitle(proc.kind)),
            iblocks,
            links: proc.embedded_links.clone(),
        }
    }
}
