//! Devices that can show a view hierarchy and take input.
//!
//! [`AdbDevice`] shells out to `adb`; [`SimulatedDevice`] runs a
//! [`SimulatedApp`] state graph in memory.

mod adb;
mod omission;
mod sim;

use thiserror::Error;

use crate::gui::{DumpError, ViewNode};

pub use adb::{
    escape_input_text, AdbConfig, AdbDevice, CommandOutput, CommandRunner, RecordingRunner, SystemRunner, FATAL_MARKER,
};
pub use omission::{omission_plan, synthesize_omissions, OmissionError};
pub use sim::{SimAction, SimAppSpec, SimError, SimulatedApp, SimulatedDevice, StateSpec, TransitionSpec};

/// A low-level input event in screen pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceEvent {
    Tap {
        x: i32,
        y: i32,
    },
    DoubleTap {
        x: i32,
        y: i32,
    },
    LongTap {
        x: i32,
        y: i32,
    },
    /// Typed into whatever has focus.
    Text(String),
    Swipe {
        from: (i32, i32),
        to: (i32, i32),
    },
    Back,
}

impl DeviceEvent {
    fn points(&self) -> Vec<(i32, i32)> {
        match *self {
            DeviceEvent::Tap { x, y } | DeviceEvent::DoubleTap { x, y } | DeviceEvent::LongTap { x, y } => {
                vec![(x, y)]
            }
            DeviceEvent::Swipe { from, to } => vec![from, to],
            DeviceEvent::Text(_) | DeviceEvent::Back => Vec::new(),
        }
    }

    /// Rejects coordinates outside a `width` x `height` screen.
    pub fn check_on_screen(&self, (width, height): (i32, i32)) -> Result<(), DeviceError> {
        match self
            .points()
            .into_iter()
            .find(|&(x, y)| x < 0 || y < 0 || x >= width || y >= height)
        {
            Some((x, y)) => Err(DeviceError::OffScreen { x, y, width, height }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("cannot read the view hierarchy: {0}")]
    Dump(#[from] DumpError),
    #[error("`{command}` failed: {detail}")]
    Command { command: String, detail: String },
    #[error("point ({x},{y}) is outside the {width}x{height} screen")]
    OffScreen { x: i32, y: i32, width: i32, height: i32 },
    #[error("device session lost: {0}")]
    SessionLost(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One live session on a device or emulator.
pub trait Device: Send {
    fn dump_hierarchy(&mut self) -> Result<ViewNode, DeviceError>;

    fn inject(&mut self, event: &DeviceEvent) -> Result<(), DeviceError>;

    /// Whether the app under test has crashed since the session (re)started.
    fn crashed(&mut self) -> Result<bool, DeviceError>;

    fn press_back(&mut self) -> Result<(), DeviceError> {
        self.inject(&DeviceEvent::Back)
    }

    /// Relaunches the app from its initial screen.
    fn restart(&mut self) -> Result<(), DeviceError>;

    /// Width and height in pixels.
    fn screen_size(&self) -> (i32, i32);
}

impl<D: Device + ?Sized> Device for Box<D> {
    fn dump_hierarchy(&mut self) -> Result<ViewNode, DeviceError> {
        (**self).dump_hierarchy()
    }

    fn inject(&mut self, event: &DeviceEvent) -> Result<(), DeviceError> {
        (**self).inject(event)
    }

    fn crashed(&mut self) -> Result<bool, DeviceError> {
        (**self).crashed()
    }

    fn press_back(&mut self) -> Result<(), DeviceError> {
        (**self).press_back()
    }

    fn restart(&mut self) -> Result<(), DeviceError> {
        (**self).restart()
    }

    fn screen_size(&self) -> (i32, i32) {
        (**self).screen_size()
    }
}
