#!/usr/bin/env node
import { emitDetectionsMain } from '../cli'

emitDetectionsMain(process.argv.slice(2))
