#pragma once

#include "tunekit/cluster.hpp"
#include "tunekit/corpus.hpp"
#include "tunekit/embed.hpp"
#include "tunekit/errors.hpp"
#include "tunekit/ifd.hpp"
#include "tunekit/pack.hpp"
#include "tunekit/pipeline.hpp"
#include "tunekit/select.hpp"
#include "tunekit/tokenize.hpp"
