#pragma once

// Umbrella header for the whole library.

#include "dimt/core/autograd.hpp"
#include "dimt/core/errors.hpp"
#include "dimt/core/hash.hpp"
#include "dimt/core/jsonio.hpp"
#include "dimt/core/log.hpp"
#include "dimt/core/matrix.hpp"
#include "dimt/core/params.hpp"
#include "dimt/core/raster.hpp"
#include "dimt/experiment/experiment.hpp"
#include "dimt/experiment/plot.hpp"
#include "dimt/inference/beam.hpp"
#include "dimt/inference/translate.hpp"
#include "dimt/metrics/bleu.hpp"
#include "dimt/metrics/report.hpp"
#include "dimt/metrics/structure.hpp"
#include "dimt/model/student.hpp"
#include "dimt/model/text_translator.hpp"
#include "dimt/nn/layers.hpp"
#include "dimt/synthdoc/corpus.hpp"
#include "dimt/synthdoc/font.hpp"
#include "dimt/synthdoc/lexicon.hpp"
#include "dimt/synthdoc/render.hpp"
#include "dimt/teacher/teacher.hpp"
#include "dimt/text/markdown.hpp"
#include "dimt/text/vocab.hpp"
#include "dimt/training/loop.hpp"
#include "dimt/training/optim.hpp"
#include "dimt/training/trainer.hpp"
