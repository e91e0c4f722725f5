#!/usr/bin/env node
import { extractFeaturesMain } from '../cli'

extractFeaturesMain(process.argv.slice(2))
