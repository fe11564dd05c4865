#pragma once

#include "clipvqa/checkpoint.hpp"
#include "clipvqa/dataset.hpp"
#include "clipvqa/fpt.hpp"
#include "clipvqa/frame_ingest.hpp"
#include "clipvqa/gradcheck.hpp"
#include "clipvqa/metrics.hpp"
#include "clipvqa/model.hpp"
#include "clipvqa/modelcheck.hpp"
#include "clipvqa/mos2language.hpp"
#include "clipvqa/nn.hpp"
#include "clipvqa/quality_head.hpp"
#include "clipvqa/rng.hpp"
#include "clipvqa/sat.hpp"
#include "clipvqa/svr.hpp"
#include "clipvqa/synthetic.hpp"
#include "clipvqa/tensor.hpp"
#include "clipvqa/train.hpp"
#include "clipvqa/vat.hpp"
