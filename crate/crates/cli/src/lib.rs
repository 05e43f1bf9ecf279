// SPDX-License-Identifier: Apache-2.0

//! Library side of the `vtee` tool: the scenario runner, shared with the
//! integration and acceptance tests.

pub mod scenario;
