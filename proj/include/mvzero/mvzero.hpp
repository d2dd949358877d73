#pragma once

#include "mvzero/classifier.hpp"
#include "mvzero/dataset.hpp"
#include "mvzero/embedding_io.hpp"
#include "mvzero/error.hpp"
#include "mvzero/eval.hpp"
#include "mvzero/prompt_bank.hpp"
#include "mvzero/report.hpp"
#include "mvzero/scoring.hpp"
#include "mvzero/synthetic.hpp"
#include "mvzero/view_selection.hpp"
