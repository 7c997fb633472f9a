#pragma once

#include "chaffwin/adversary.hpp"
#include "chaffwin/analyzer.hpp"
#include "chaffwin/clf.hpp"
#include "chaffwin/config.hpp"
#include "chaffwin/encoding.hpp"
#include "chaffwin/errors.hpp"
#include "chaffwin/mapreduce.hpp"
#include "chaffwin/pipeline.hpp"
#include "chaffwin/random.hpp"
#include "chaffwin/stats.hpp"
#include "chaffwin/tagging.hpp"
#include "chaffwin/traffic.hpp"
#include "chaffwin/workflow.hpp"
